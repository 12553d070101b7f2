#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace cfl {

struct Segment {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 1;

  std::size_t size() const noexcept { return rows * cols; }
  bool operator==(const Segment&) const = default;
};

// Named, ordered tensor segments of a flat parameter vector.
class Layout {
 public:
  Layout() = default;
  explicit Layout(std::vector<Segment> segments);

  const std::vector<Segment>& segments() const noexcept { return segments_; }
  std::size_t total() const noexcept { return total_; }
  std::size_t offset(std::size_t segment) const { return offsets_.at(segment); }
  // Index of the named segment; throws ValidationError when absent.
  std::size_t find(const std::string& name) const;

  bool operator==(const Layout& other) const { return segments_ == other.segments_; }

 private:
  std::vector<Segment> segments_;
  std::vector<std::size_t> offsets_;
  std::size_t total_ = 0;
};

// Flat parameter vector tagged with its layout. Client representations,
// client models and cluster centroids are all ParamVectors.
class ParamVector {
 public:
  ParamVector() = default;
  explicit ParamVector(std::shared_ptr<const Layout> layout, double fill = 0.0);
  ParamVector(std::shared_ptr<const Layout> layout, std::vector<double> values);

  // Untyped vector with a single segment named "flat".
  static ParamVector flat(std::vector<double> values);

  std::size_t size() const noexcept { return values_.size(); }
  const Layout& layout() const { return *layout_; }
  const std::shared_ptr<const Layout>& layout_ptr() const noexcept { return layout_; }

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  std::span<double> segment(std::size_t s);
  std::span<const double> segment(std::size_t s) const;

  ParamVector& operator+=(const ParamVector& o);
  ParamVector& operator-=(const ParamVector& o);
  ParamVector& operator*=(double s);
  // this += a * x
  ParamVector& axpy(double a, const ParamVector& x);

  bool same_shape(const ParamVector& o) const;

  bool operator==(const ParamVector& o) const { return same_shape(o) && values_ == o.values_; }

 private:
  std::shared_ptr<const Layout> layout_;
  std::vector<double> values_;
};

ParamVector operator+(ParamVector a, const ParamVector& b);
ParamVector operator-(ParamVector a, const ParamVector& b);
ParamVector operator*(double s, ParamVector a);

double dot(const ParamVector& a, const ParamVector& b);
double l2_norm(const ParamVector& a);
double squared_distance(const ParamVector& a, const ParamVector& b);

// Throws ShapeError unless both vectors share the same layout.
void require_same_shape(const ParamVector& a, const ParamVector& b, const char* context);

// Concatenation of the listed segments, in the listed order.
ParamVector restrict_to(const ParamVector& p, const std::vector<std::string>& segment_names);

}  // namespace cfl
