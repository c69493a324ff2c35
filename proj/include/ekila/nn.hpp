#pragma once

// Minimal layers with hand-written backward passes. Activations are stored as
// channels x (batch * height * width) matrices; column ((b * h) + y) * w + x is one pixel.

#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "ekila/common.hpp"

namespace ekila::nn {

template <class T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <class T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

struct Shape {
    int batch = 0;
    int height = 0;
    int width = 0;

    int pixels() const { return batch * height * width; }
};

template <class T>
struct Param {
    Mat<T> value;
    Mat<T> grad;
    Mat<T> m;
    Mat<T> v;

    void resize(int rows, int cols) {
        value = Mat<T>::Zero(rows, cols);
        grad = m = v = value;
    }
    void zeroGrad() { grad.setZero(); }
};

/// He-normal initialisation for a layer with the given fan-in.
template <class T>
void heInit(Mat<T>& w, int fanIn, Rng& rng) {
    const double stddev = std::sqrt(2.0 / fanIn);
    for (Eigen::Index c = 0; c < w.cols(); ++c)
        for (Eigen::Index r = 0; r < w.rows(); ++r) w(r, c) = static_cast<T>(stddev * rng.normal());
}

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

template <class T>
void adamStep(Param<T>& p, const AdamConfig& cfg, long step) {
    const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
    p.m = b1 * p.m + (1 - b1) * p.grad;
    p.v = b2 * p.v + (1 - b2) * p.grad.cwiseProduct(p.grad);
    const T c1 = static_cast<T>(1 - std::pow(cfg.beta1, step));
    const T c2 = static_cast<T>(1 - std::pow(cfg.beta2, step));
    const T lr = static_cast<T>(cfg.lr), eps = static_cast<T>(cfg.eps);
    p.value.array() -= lr * (p.m.array() / c1) / ((p.v.array() / c2).sqrt() + eps);
}

/// 3x3 convolution with padding 1.
template <class T>
class Conv3x3 {
public:
    Conv3x3() = default;
    Conv3x3(int cin, int cout, int stride) : cin_(cin), cout_(cout), stride_(stride) {
        weight.resize(cout, cin * 9);
        bias.resize(cout, 1);
    }

    void init(Rng& rng) {
        heInit(weight.value, cin_ * 9, rng);
        bias.value.setZero();
    }

    Shape outShape(Shape in) const {
        return Shape{in.batch, (in.height - 1) / stride_ + 1, (in.width - 1) / stride_ + 1};
    }

    Mat<T> forward(const Mat<T>& x, Shape in) {
        in_ = in;
        out_ = outShape(in);
        cols_ = im2col(x, in_, out_);
        Mat<T> y = weight.value * cols_;
        y.colwise() += bias.value.col(0);
        return y;
    }

    /// Inference-only forward that keeps no state.
    Mat<T> apply(const Mat<T>& x, Shape in) const {
        Mat<T> y = weight.value * im2col(x, in, outShape(in));
        y.colwise() += bias.value.col(0);
        return y;
    }

    Mat<T> backward(const Mat<T>& dy) {
        weight.grad.noalias() += dy * cols_.transpose();
        bias.grad.col(0) += dy.rowwise().sum();
        Mat<T> dcols = weight.value.transpose() * dy;
        Mat<T> dx = Mat<T>::Zero(cin_, in_.pixels());
        forEachTap(in_, out_, [&](Eigen::Index row, Eigen::Index col, Eigen::Index src) { dx(row / 9, src) += dcols(row, col); });
        return dx;
    }

    int inChannels() const { return cin_; }
    int outChannels() const { return cout_; }
    int stride() const { return stride_; }

    Param<T> weight;
    Param<T> bias;

private:
    template <class F>
    void forEachTap(Shape in, Shape out, F&& f) const {
        for (int b = 0; b < out.batch; ++b)
            for (int oy = 0; oy < out.height; ++oy)
                for (int ox = 0; ox < out.width; ++ox) {
                    const Eigen::Index col = (static_cast<Eigen::Index>(b) * out.height + oy) * out.width + ox;
                    for (int ky = 0; ky < 3; ++ky) {
                        const int iy = oy * stride_ + ky - 1;
                        if (iy < 0 || iy >= in.height) continue;
                        for (int kx = 0; kx < 3; ++kx) {
                            const int ix = ox * stride_ + kx - 1;
                            if (ix < 0 || ix >= in.width) continue;
                            const Eigen::Index src = (static_cast<Eigen::Index>(b) * in.height + iy) * in.width + ix;
                            for (int c = 0; c < cin_; ++c) f(c * 9 + ky * 3 + kx, col, src);
                        }
                    }
                }
    }

    Mat<T> im2col(const Mat<T>& x, Shape in, Shape out) const {
        Mat<T> cols = Mat<T>::Zero(static_cast<Eigen::Index>(cin_) * 9, out.pixels());
        forEachTap(in, out, [&](Eigen::Index row, Eigen::Index col, Eigen::Index src) { cols(row, col) = x(row / 9, src); });
        return cols;
    }

    int cin_ = 0;
    int cout_ = 0;
    int stride_ = 1;
    Shape in_;
    Shape out_;
    Mat<T> cols_;
};

template <class T>
class Linear {
public:
    Linear() = default;
    Linear(int in, int out) : in_(in), out_(out) {
        weight.resize(out, in);
        bias.resize(out, 1);
    }

    void init(Rng& rng) {
        heInit(weight.value, in_, rng);
        bias.value.setZero();
    }

    Mat<T> forward(const Mat<T>& x) {
        x_ = x;
        return apply(x);
    }

    Mat<T> apply(const Mat<T>& x) const {
        Mat<T> y = weight.value * x;
        y.colwise() += bias.value.col(0);
        return y;
    }

    Vec<T> applyOne(const Vec<T>& x) const { return weight.value * x + bias.value.col(0); }

    Mat<T> backward(const Mat<T>& dy) {
        weight.grad.noalias() += dy * x_.transpose();
        bias.grad.col(0) += dy.rowwise().sum();
        return weight.value.transpose() * dy;
    }

    int inputs() const { return in_; }
    int outputs() const { return out_; }

    Param<T> weight;
    Param<T> bias;

private:
    int in_ = 0;
    int out_ = 0;
    Mat<T> x_;
};

template <class T>
Mat<T> relu(const Mat<T>& x) {
    return x.cwiseMax(T(0));
}

/// Gradient of relu given its output.
template <class T>
Mat<T> reluBackward(const Mat<T>& dy, const Mat<T>& y) {
    return (y.array() > T(0)).select(dy, T(0));
}

/// Column-wise l2 normalisation and its backward pass.
template <class T>
Mat<T> normalizeColumns(const Mat<T>& z, Vec<T>* norms = nullptr) {
    Mat<T> out = z;
    Vec<T> n(z.cols());
    for (Eigen::Index c = 0; c < z.cols(); ++c) {
        n(c) = z.col(c).norm();
        if (n(c) > T(0)) out.col(c) /= n(c);
    }
    if (norms) *norms = n;
    return out;
}

template <class T>
Mat<T> normalizeColumnsBackward(const Mat<T>& dOut, const Mat<T>& out, const Vec<T>& norms) {
    Mat<T> dz(dOut.rows(), dOut.cols());
    for (Eigen::Index c = 0; c < dOut.cols(); ++c) {
        if (norms(c) == T(0)) {
            dz.col(c).setZero();
            continue;
        }
        const T proj = out.col(c).dot(dOut.col(c));
        dz.col(c) = (dOut.col(c) - proj * out.col(c)) / norms(c);
    }
    return dz;
}

}  // namespace ekila::nn
