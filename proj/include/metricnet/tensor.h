#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

namespace metricnet {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

/// Dense row-major array with an optional gradient slot of the same shape.
template <typename Real>
struct Tensor {
  Shape shape;
  std::vector<Real> values;
  std::vector<Real> grad;  // empty until populated

  Tensor() = default;
  explicit Tensor(Shape s, Real fill = Real(0));
  /// Throws ShapeError if values.size() != numel(s).
  Tensor(Shape s, std::vector<Real> v);

  std::size_t size() const { return values.size(); }
  bool has_grad() const { return grad.size() == values.size(); }
  void zero_grad() { grad.assign(values.size(), Real(0)); }
};

/// Named trainable parameters plus non-trainable buffers (normalisation
/// running statistics). Iteration order is lexicographic by name.
template <typename Real>
class ParamSet {
 public:
  using Map = std::map<std::string, Tensor<Real>>;

  /// Throws std::invalid_argument on duplicate names.
  Tensor<Real>& add(const std::string& name, Shape shape, Real fill = Real(0));
  Tensor<Real>& add_buffer(const std::string& name, Shape shape,
                           Real fill = Real(0));

  bool contains(const std::string& name) const;
  /// Looks up parameters first, then buffers. Throws std::out_of_range.
  Tensor<Real>& at(const std::string& name);
  const Tensor<Real>& at(const std::string& name) const;

  Map& params() { return params_; }
  const Map& params() const { return params_; }
  Map& buffers() { return buffers_; }
  const Map& buffers() const { return buffers_; }

  void zero_grad();
  void clear_grad();
  std::size_t num_parameters() const;

  template <typename Other>
  ParamSet<Other> cast() const {
    ParamSet<Other> out;
    auto copy = [](const Map& from, auto& to) {
      for (const auto& [name, t] : from) {
        Tensor<Other> c(t.shape);
        for (std::size_t i = 0; i < t.size(); ++i) {
          c.values[i] = static_cast<Other>(t.values[i]);
        }
        to.emplace(name, std::move(c));
      }
    };
    copy(params_, out.params());
    copy(buffers_, out.buffers());
    return out;
  }

 private:
  Map params_;
  Map buffers_;
};

extern template struct Tensor<float>;
extern template struct Tensor<double>;
extern template class ParamSet<float>;
extern template class ParamSet<double>;

}  // namespace metricnet
