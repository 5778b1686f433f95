#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace pamlab {

/// A point of Z^d.
using Site = std::vector<int>;

Site origin(int dim);
Site unit_vector(int dim, int axis, int length = 1);
Site operator+(const Site& a, const Site& b);
Site operator-(const Site& a, const Site& b);

double euclidean_norm(const Site& x);
int l1_norm(const Site& x);
int sup_norm(const Site& x);

/// "1:0:0" style text form used in configs, CSV and JSON.
std::string format_site(const Site& x);
Site parse_site(const std::string& text, int dim);

/// Sup-norm cube {center + z : |z|_inf <= radius}, stored row-major with the
/// last coordinate varying fastest.
class Box {
 public:
  Box() = default;
  Box(int dim, int radius);
  Box(Site center, int radius);

  int dim() const { return static_cast<int>(center_.size()); }
  int radius() const { return radius_; }
  const Site& center() const { return center_; }
  int side() const { return 2 * radius_ + 1; }
  std::size_t size() const { return size_; }

  bool contains(const Site& x) const;
  std::size_t index(const Site& x) const;
  Site site(std::size_t index) const;
  /// Sup-norm distance from x to the outside of the box (0 on the edge layer).
  int depth(const Site& x) const;

  Box grown(int extra) const { return Box(center_, radius_ + extra); }

  friend bool operator==(const Box& a, const Box& b) {
    return a.radius_ == b.radius_ && a.center_ == b.center_;
  }

 private:
  Site center_;
  int radius_ = 0;
  std::size_t size_ = 1;
};

/// Iterates sites of a box in storage order without allocating per site.
class BoxCursor {
 public:
  explicit BoxCursor(const Box& box);
  const Site& site() const { return site_; }
  std::size_t index() const { return index_; }
  bool valid() const { return index_ < size_; }
  void next();

 private:
  Site lo_;
  Site hi_;
  Site site_;
  std::size_t index_ = 0;
  std::size_t size_ = 0;
};

/// Copies values between boxes of equal dimension; sites missing from the
/// source are zero in the destination.
std::vector<double> reembed(const Box& from, const std::vector<double>& values, const Box& to);

}  // namespace pamlab
