#include "cfl/param_vector.hpp"

#include <cmath>
#include <string>

#include "cfl/errors.hpp"

namespace cfl {

Layout::Layout(std::vector<Segment> segments) : segments_(std::move(segments)) {
  for (const auto& s : segments_) {
    offsets_.push_back(total_);
    total_ += s.size();
  }
}

std::size_t Layout::find(const std::string& name) const {
  for (std::size_t i = 0; i < segments_.size(); ++i)
    if (segments_[i].name == name) return i;
  throw ValidationError("layout has no segment named '" + name + "'");
}

ParamVector::ParamVector(std::shared_ptr<const Layout> layout, double fill)
    : layout_(std::move(layout)), values_(layout_->total(), fill) {}

ParamVector::ParamVector(std::shared_ptr<const Layout> layout, std::vector<double> values)
    : layout_(std::move(layout)), values_(std::move(values)) {
  if (values_.size() != layout_->total())
    throw ShapeError("parameter count " + std::to_string(values_.size()) + " does not match layout total " +
                     std::to_string(layout_->total()));
}

ParamVector ParamVector::flat(std::vector<double> values) {
  auto layout = std::make_shared<const Layout>(std::vector<Segment>{{"flat", values.size(), 1}});
  return ParamVector(std::move(layout), std::move(values));
}

std::span<double> ParamVector::segment(std::size_t s) {
  return std::span<double>(values_).subspan(layout_->offset(s), layout_->segments().at(s).size());
}

std::span<const double> ParamVector::segment(std::size_t s) const {
  return std::span<const double>(values_).subspan(layout_->offset(s), layout_->segments().at(s).size());
}

bool ParamVector::same_shape(const ParamVector& o) const {
  if (values_.size() != o.values_.size()) return false;
  if (layout_ == o.layout_) return true;
  if (!layout_ || !o.layout_) return false;
  return *layout_ == *o.layout_;
}

void require_same_shape(const ParamVector& a, const ParamVector& b, const char* context) {
  if (!a.same_shape(b))
    throw ShapeError(std::string(context) + ": parameter layouts differ (" + std::to_string(a.size()) + " vs " +
                     std::to_string(b.size()) + " values)");
}

ParamVector& ParamVector::operator+=(const ParamVector& o) {
  require_same_shape(*this, o, "operator+=");
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += o.values_[i];
  return *this;
}

ParamVector& ParamVector::operator-=(const ParamVector& o) {
  require_same_shape(*this, o, "operator-=");
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] -= o.values_[i];
  return *this;
}

ParamVector& ParamVector::operator*=(double s) {
  for (auto& v : values_) v *= s;
  return *this;
}

ParamVector& ParamVector::axpy(double a, const ParamVector& x) {
  require_same_shape(*this, x, "axpy");
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += a * x.values_[i];
  return *this;
}

ParamVector operator+(ParamVector a, const ParamVector& b) { return a += b; }
ParamVector operator-(ParamVector a, const ParamVector& b) { return a -= b; }
ParamVector operator*(double s, ParamVector a) { return a *= s; }

double dot(const ParamVector& a, const ParamVector& b) {
  require_same_shape(a, b, "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double l2_norm(const ParamVector& a) {
  double s = 0.0;
  for (double v : a.values()) s += v * v;
  return std::sqrt(s);
}

double squared_distance(const ParamVector& a, const ParamVector& b) {
  require_same_shape(a, b, "squared_distance");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

ParamVector restrict_to(const ParamVector& p, const std::vector<std::string>& segment_names) {
  std::vector<Segment> segs;
  std::vector<double> values;
  for (const auto& name : segment_names) {
    auto idx = p.layout().find(name);
    segs.push_back(p.layout().segments()[idx]);
    auto seg = p.segment(idx);
    values.insert(values.end(), seg.begin(), seg.end());
  }
  return ParamVector(std::make_shared<const Layout>(std::move(segs)), std::move(values));
}

}  // namespace cfl
