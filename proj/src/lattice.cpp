#include "pamlab/lattice.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <sstream>

#include "pamlab/errors.hpp"

namespace pamlab {

Site origin(int dim) {
  if (dim < 1) throw InvalidArgument("dimension must be at least 1");
  return Site(static_cast<std::size_t>(dim), 0);
}

Site unit_vector(int dim, int axis, int length) {
  Site e = origin(dim);
  if (axis < 0 || axis >= dim) throw InvalidArgument("axis out of range");
  e[static_cast<std::size_t>(axis)] = length;
  return e;
}

Site operator+(const Site& a, const Site& b) {
  if (a.size() != b.size()) throw InvalidArgument("site dimension mismatch");
  Site r(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] + b[i];
  return r;
}

Site operator-(const Site& a, const Site& b) {
  if (a.size() != b.size()) throw InvalidArgument("site dimension mismatch");
  Site r(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] - b[i];
  return r;
}

double euclidean_norm(const Site& x) {
  double s = 0.0;
  for (int v : x) s += static_cast<double>(v) * static_cast<double>(v);
  return std::sqrt(s);
}

int l1_norm(const Site& x) {
  int s = 0;
  for (int v : x) s += std::abs(v);
  return s;
}

int sup_norm(const Site& x) {
  int s = 0;
  for (int v : x) s = std::max(s, std::abs(v));
  return s;
}

std::string format_site(const Site& x) {
  std::string out;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (i) out += ':';
    out += std::to_string(x[i]);
  }
  return out;
}

Site parse_site(const std::string& text, int dim) {
  Site x;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ':')) {
    char* end = nullptr;
    long v = std::strtol(part.c_str(), &end, 10);
    if (part.empty() || end == part.c_str() || *end != '\0') {
      throw InvalidArgument("malformed site '" + text + "'");
    }
    x.push_back(static_cast<int>(v));
  }
  if (static_cast<int>(x.size()) != dim) {
    throw InvalidArgument("site '" + text + "' does not have " + std::to_string(dim) +
                          " coordinates");
  }
  return x;
}

Box::Box(int dim, int radius) : Box(origin(dim), radius) {}

Box::Box(Site center, int radius) : center_(std::move(center)), radius_(radius) {
  if (center_.empty()) throw InvalidArgument("box dimension must be at least 1");
  if (radius < 0) throw InvalidArgument("box radius must be nonnegative");
  size_ = 1;
  for (std::size_t i = 0; i < center_.size(); ++i) {
    size_ *= static_cast<std::size_t>(side());
  }
}

bool Box::contains(const Site& x) const {
  if (x.size() != center_.size()) return false;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (std::abs(x[i] - center_[i]) > radius_) return false;
  }
  return true;
}

std::size_t Box::index(const Site& x) const {
  std::size_t idx = 0;
  const auto n = static_cast<std::size_t>(side());
  for (std::size_t i = 0; i < x.size(); ++i) {
    idx = idx * n + static_cast<std::size_t>(x[i] - center_[i] + radius_);
  }
  return idx;
}

Site Box::site(std::size_t index) const {
  Site x(center_.size());
  const auto n = static_cast<std::size_t>(side());
  for (std::size_t i = center_.size(); i-- > 0;) {
    x[i] = static_cast<int>(index % n) - radius_ + center_[i];
    index /= n;
  }
  return x;
}

int Box::depth(const Site& x) const {
  int d = radius_;
  for (std::size_t i = 0; i < x.size(); ++i) {
    d = std::min(d, radius_ - std::abs(x[i] - center_[i]));
  }
  return d;
}

BoxCursor::BoxCursor(const Box& box) : size_(box.size()) {
  lo_ = box.center();
  hi_ = box.center();
  for (std::size_t i = 0; i < lo_.size(); ++i) {
    lo_[i] -= box.radius();
    hi_[i] += box.radius();
  }
  site_ = lo_;
}

void BoxCursor::next() {
  ++index_;
  for (std::size_t i = site_.size(); i-- > 0;) {
    if (site_[i] < hi_[i]) {
      ++site_[i];
      return;
    }
    site_[i] = lo_[i];
  }
}

std::vector<double> reembed(const Box& from, const std::vector<double>& values, const Box& to) {
  if (from.dim() != to.dim()) throw InvalidArgument("box dimension mismatch");
  std::vector<double> out(to.size(), 0.0);
  for (BoxCursor c(from); c.valid(); c.next()) {
    if (to.contains(c.site())) out[to.index(c.site())] = values[c.index()];
  }
  return out;
}

}  // namespace pamlab
