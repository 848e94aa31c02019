#ifndef SYNCD_TENSOR_HPP
#define SYNCD_TENSOR_HPP

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace syncd {

// Additive-mask value for blocked attention entries. Finite so exp() underflows
// to zero instead of producing NaNs downstream.
inline constexpr double kBlockedSentinel = -1e9;

struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct RangeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Dense row-major f64 array of arbitrary rank. The universal numeric carrier
// between modules; heavy math maps slices into Eigen.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
    Tensor(std::vector<std::size_t> shape, std::vector<double> data);

    static Tensor from_matrix(const Eigen::MatrixXd& m);
    static Tensor identity(std::size_t n);

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& storage() { return data_; }
    const std::vector<double>& storage() const { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double& at(std::initializer_list<std::size_t> idx);
    double at(std::initializer_list<std::size_t> idx) const;

    // Rank-2 view (no copy). Throws ShapeError unless rank()==2.
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> mat() const;
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> mat();

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    std::string shape_str() const;

private:
    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

// Elementwise helpers, shape-checked.
Tensor operator+(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);
Tensor operator*(double s, const Tensor& a);

double frobenius_norm(const Tensor& a);

// a[m x k] * b[k x p], 64-bit accumulation.
Tensor matmul(const Tensor& a, const Tensor& b);

// Softmax over the last dimension with max-subtraction. A slice whose entries
// are all <= kBlockedSentinel yields zeros (masked queries contribute nothing).
Tensor softmax_lastdim(const Tensor& x);

// 4-neighbor bilinear interpolation on an h x w x d field. u is the column
// coordinate, v the row coordinate. Out-of-range coordinates throw RangeError.
std::vector<double> bilinear_sample(const Tensor& f, double u, double v);

}  // namespace syncd

#endif
