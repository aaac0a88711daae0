#ifndef XDSP_TENSOR_HPP
#define XDSP_TENSOR_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "xdsp/errors.hpp"

namespace xdsp::num {

using Index = Eigen::Index;

// Row-major so serialized scalars follow the declared layout.
template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

enum class Dtype : std::uint8_t { f32 = 0, f64 = 1 };

template <typename S>
constexpr Dtype dtype_of() {
  return sizeof(S) == 4 ? Dtype::f32 : Dtype::f64;
}

inline std::string shape_str(const std::vector<Index>& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

// Dense value of rank 0, 1 or 2. Vectors are stored as n x 1, scalars as
// 1 x 1; the rank only affects shape() and serialization. Entries are
// checked finite on construction, so a tensor in hand is always finite.
template <typename S>
class Tensor {
 public:
  Tensor() : rank_(0), m_(Mat<S>::Zero(1, 1)) {}

  static Tensor scalar(S v) {
    Tensor t;
    t.m_(0, 0) = v;
    t.check_finite("scalar");
    return t;
  }

  static Tensor vector(Vec<S> v) {
    Tensor t;
    t.rank_ = 1;
    t.m_ = v;
    t.check_finite("vector");
    return t;
  }

  static Tensor matrix(Mat<S> m) {
    Tensor t;
    t.rank_ = 2;
    t.m_ = std::move(m);
    t.check_finite("matrix");
    return t;
  }

  static Tensor zeros_like(const Tensor& other) {
    Tensor t;
    t.rank_ = other.rank_;
    t.m_ = Mat<S>::Zero(other.rows(), other.cols());
    return t;
  }

  int rank() const { return rank_; }
  Dtype dtype() const { return dtype_of<S>(); }
  Index rows() const { return m_.rows(); }
  Index cols() const { return m_.cols(); }
  Index size() const { return m_.size(); }

  std::vector<Index> shape() const {
    switch (rank_) {
      case 0: return {};
      case 1: return {m_.rows()};
      default: return {m_.rows(), m_.cols()};
    }
  }

  S value() const {
    if (m_.size() != 1) throw ContractError("Tensor::value: not a scalar, shape " + shape_str(shape()));
    return m_(0, 0);
  }

  const Mat<S>& mat() const { return m_; }
  Mat<S>& mat() { return m_; }
  Vec<S> vec() const {
    if (m_.cols() != 1) throw ContractError("Tensor::vec: shape " + shape_str(shape()) + " is not a column");
    return m_.col(0);
  }

  bool all_finite() const { return m_.allFinite(); }

  bool same_shape(const Tensor& o) const {
    return rank_ == o.rank_ && rows() == o.rows() && cols() == o.cols();
  }

 private:
  void check_finite(const char* what) const {
    if (!m_.allFinite()) throw NonFiniteError(std::string("Tensor::") + what + ": non-finite entry");
  }

  int rank_;
  Mat<S> m_;
};

using Tensor32 = Tensor<float>;
using Tensor64 = Tensor<double>;

}  // namespace xdsp::num

#endif
