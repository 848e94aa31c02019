#include "syncd/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace syncd {

namespace {
std::size_t shape_product(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) {
        if (d == 0) throw ShapeError("tensor dimension must be positive");
        n *= d;
    }
    return n;
}
}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), data_(shape_product(shape_), fill) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != shape_product(shape_))
        throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                         " does not match shape " + shape_str());
}

Tensor Tensor::from_matrix(const Eigen::MatrixXd& m) {
    Tensor t({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())});
    t.mat() = m;
    return t;
}

Tensor Tensor::identity(std::size_t n) {
    Tensor t({n, n});
    for (std::size_t i = 0; i < n; ++i) t.data_[i * n + i] = 1.0;
    return t;
}

namespace {
std::size_t flat_index(const std::vector<std::size_t>& shape,
                       std::initializer_list<std::size_t> idx, const std::string& shape_str) {
    if (idx.size() != shape.size()) throw ShapeError("index rank mismatch for " + shape_str);
    std::size_t flat = 0;
    std::size_t k = 0;
    for (std::size_t i : idx) {
        if (i >= shape[k]) throw RangeError("index out of range in dim " + std::to_string(k));
        flat = flat * shape[k] + i;
        ++k;
    }
    return flat;
}
}  // namespace

double& Tensor::at(std::initializer_list<std::size_t> idx) {
    return data_[flat_index(shape_, idx, shape_str())];
}

double Tensor::at(std::initializer_list<std::size_t> idx) const {
    return data_[flat_index(shape_, idx, shape_str())];
}

Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> Tensor::mat() const {
    if (rank() != 2) throw ShapeError("mat() requires rank 2, got " + shape_str());
    return {data_.data(), static_cast<Eigen::Index>(shape_[0]), static_cast<Eigen::Index>(shape_[1])};
}

Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> Tensor::mat() {
    if (rank() != 2) throw ShapeError("mat() requires rank 2, got " + shape_str());
    return {data_.data(), static_cast<Eigen::Index>(shape_[0]), static_cast<Eigen::Index>(shape_[1])};
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape_.size(); ++i) os << (i ? "x" : "") << shape_[i];
    os << "]";
    return os.str();
}

Tensor operator+(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw ShapeError("shape mismatch " + a.shape_str() + " vs " + b.shape_str());
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
    return out;
}

Tensor operator-(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw ShapeError("shape mismatch " + a.shape_str() + " vs " + b.shape_str());
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
    return out;
}

Tensor operator*(double s, const Tensor& a) {
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= s;
    return out;
}

double frobenius_norm(const Tensor& a) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * a[i];
    return std::sqrt(s);
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
        throw ShapeError("matmul shape mismatch " +
                         (a.rank() == 2 ? a.shape_str() : std::string("rank-") + std::to_string(a.rank())) +
                         " x " +
                         (b.rank() == 2 ? b.shape_str() : std::string("rank-") + std::to_string(b.rank())));
    Tensor out({a.dim(0), b.dim(1)});
    out.mat() = a.mat() * b.mat();
    return out;
}

Tensor softmax_lastdim(const Tensor& x) {
    if (x.rank() == 0 || x.dim(x.rank() - 1) == 0)
        throw ShapeError("softmax_lastdim: empty last dimension");
    const std::size_t w = x.dim(x.rank() - 1);
    Tensor out = x;
    for (std::size_t row = 0; row < x.size() / w; ++row) {
        double* p = out.data() + row * w;
        double mx = *std::max_element(p, p + w);
        // Blocked logits are shifted by kBlockedSentinel, so a row whose max is
        // still in that region has every key blocked.
        if (mx <= kBlockedSentinel / 2) {
            // Fully blocked row: zeros by convention.
            std::fill(p, p + w, 0.0);
            continue;
        }
        double sum = 0.0;
        for (std::size_t j = 0; j < w; ++j) {
            p[j] = std::exp(p[j] - mx);
            sum += p[j];
        }
        for (std::size_t j = 0; j < w; ++j) p[j] /= sum;
    }
    return out;
}

std::vector<double> bilinear_sample(const Tensor& f, double u, double v) {
    if (f.rank() != 3) throw ShapeError("bilinear_sample expects h x w x d, got " + f.shape_str());
    const std::size_t h = f.dim(0), w = f.dim(1), d = f.dim(2);
    if (!(u >= 0.0 && u <= static_cast<double>(w - 1)) ||
        !(v >= 0.0 && v <= static_cast<double>(h - 1)))
        throw RangeError("bilinear_sample coordinate out of range");
    const std::size_t u0 = static_cast<std::size_t>(std::min(std::floor(u), static_cast<double>(w - 1)));
    const std::size_t v0 = static_cast<std::size_t>(std::min(std::floor(v), static_cast<double>(h - 1)));
    const std::size_t u1 = std::min(u0 + 1, w - 1);
    const std::size_t v1 = std::min(v0 + 1, h - 1);
    const double fu = u - static_cast<double>(u0);
    const double fv = v - static_cast<double>(v0);
    const double* base = f.data();
    auto px = [&](std::size_t r, std::size_t c) { return base + (r * w + c) * d; };
    std::vector<double> out(d);
    const double *a = px(v0, u0), *b = px(v0, u1), *c = px(v1, u0), *e = px(v1, u1);
    for (std::size_t k = 0; k < d; ++k) {
        out[k] = (1 - fv) * ((1 - fu) * a[k] + fu * b[k]) + fv * ((1 - fu) * c[k] + fu * e[k]);
    }
    return out;
}

}  // namespace syncd
