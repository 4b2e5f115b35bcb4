#pragma once
#include <cassert>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "core/mat.hpp"
#include "core/rng.hpp"

namespace wm {

// Fully-connected net: ReLU on hidden layers, linear output. Weights are
// stored (out x in) so the forward pass is one matmul_nt per layer. The
// single-vector path routes through the batch path with B = 1, which keeps
// the two bitwise identical by construction.
template <typename T>
class Mlp {
  public:
    struct Layer {
        Mat<T> W; // out x in
        std::vector<T> b;
    };

    Mlp() = default;

    // sizes = {in, h1, ..., out}. He-uniform on weights, zero biases.
    // zero_final zeroes the output layer so the net starts as the zero map.
    Mlp(const std::vector<int>& sizes, Rng& rng, bool zero_final = false) : sizes_(sizes) {
        assert(sizes.size() >= 2);
        for (size_t l = 0; l + 1 < sizes.size(); ++l) {
            Layer lay;
            lay.W = Mat<T>(sizes[l + 1], sizes[l]);
            lay.b.assign(sizes[l + 1], T(0));
            const bool last = l + 2 == sizes.size();
            if (last && zero_final) {
                // leave zeros
            } else {
                double limit = std::sqrt(6.0 / sizes[l]);
                for (auto& w : lay.W.a) w = static_cast<T>(rng.uniform(-limit, limit));
            }
            layers_.push_back(std::move(lay));
        }
    }

    const std::vector<int>& sizes() const { return sizes_; }
    int input_dim() const { return sizes_.front(); }
    int output_dim() const { return sizes_.back(); }
    std::vector<Layer>& layers() { return layers_; }
    const std::vector<Layer>& layers() const { return layers_; }

    struct Cache {
        // acts[0] = input, acts[l+1] = post-activation of layer l
        std::vector<Mat<T>> acts;
    };

    // X (B x in) -> Y (B x out)
    Mat<T> forward_batch(const Mat<T>& X, Cache* cache = nullptr) const {
        assert(X.cols == input_dim());
        if (cache) {
            cache->acts.clear();
            cache->acts.push_back(X);
        }
        Mat<T> H = X;
        for (size_t l = 0; l < layers_.size(); ++l) {
            Mat<T> Z;
            matmul_nt(H, layers_[l].W, Z);
            const T* b = layers_[l].b.data();
            const bool last = l + 1 == layers_.size();
            for (int i = 0; i < Z.rows; ++i) {
                T* zi = Z.row(i);
                for (int j = 0; j < Z.cols; ++j) {
                    zi[j] += b[j];
                    if (!last && zi[j] < T(0)) zi[j] = T(0);
                }
            }
            H = std::move(Z);
            if (cache) cache->acts.push_back(H);
        }
        return H;
    }

    std::vector<T> forward(const std::vector<T>& x) const {
        Mat<T> X(1, input_dim());
        for (int j = 0; j < X.cols; ++j) X.at(0, j) = x[j];
        Mat<T> Y = forward_batch(X);
        return std::vector<T>(Y.a.begin(), Y.a.end());
    }

    // Backprop of sum_b <dY_b, f(X_b)> given dY (B x out). Returns the flat
    // parameter gradient in flatten() order. ReLU subgradient at 0 is 0.
    std::vector<T> backward_batch(const Cache& cache, const Mat<T>& dY) const {
        assert(cache.acts.size() == layers_.size() + 1);
        std::vector<Mat<T>> dW(layers_.size());
        std::vector<std::vector<T>> db(layers_.size());
        Mat<T> delta = dY;
        for (int l = static_cast<int>(layers_.size()) - 1; l >= 0; --l) {
            const Mat<T>& Hin = cache.acts[l];
            matmul_tn(delta, Hin, dW[l]);
            db[l].assign(layers_[l].b.size(), T(0));
            for (int i = 0; i < delta.rows; ++i) {
                const T* di = delta.row(i);
                for (int j = 0; j < delta.cols; ++j) db[l][j] += di[j];
            }
            if (l > 0) {
                Mat<T> dH;
                matmul_nn(delta, layers_[l].W, dH);
                const Mat<T>& Hl = cache.acts[l]; // post-ReLU output of layer l-1
                for (size_t i = 0; i < dH.a.size(); ++i)
                    if (Hl.a[i] <= T(0)) dH.a[i] = T(0);
                delta = std::move(dH);
            }
        }
        std::vector<T> g;
        g.reserve(param_count());
        for (size_t l = 0; l < layers_.size(); ++l) {
            g.insert(g.end(), dW[l].a.begin(), dW[l].a.end());
            g.insert(g.end(), db[l].begin(), db[l].end());
        }
        return g;
    }

    // Gradient of <upstream, forward(x)> with respect to all parameters.
    std::vector<T> gradient(const std::vector<T>& x, const std::vector<T>& upstream) const {
        Mat<T> X(1, input_dim());
        for (int j = 0; j < X.cols; ++j) X.at(0, j) = x[j];
        Cache cache;
        forward_batch(X, &cache);
        Mat<T> dY(1, output_dim());
        for (int j = 0; j < dY.cols; ++j) dY.at(0, j) = upstream[j];
        return backward_batch(cache, dY);
    }

    size_t param_count() const {
        size_t n = 0;
        for (const auto& l : layers_) n += l.W.a.size() + l.b.size();
        return n;
    }

    // Layer order: W row-major, then b. unflatten(flatten()) is the identity
    // bit for bit; both sides walk the same storage.
    std::vector<T> flatten() const {
        std::vector<T> out;
        out.reserve(param_count());
        for (const auto& l : layers_) {
            out.insert(out.end(), l.W.a.begin(), l.W.a.end());
            out.insert(out.end(), l.b.begin(), l.b.end());
        }
        return out;
    }

    void unflatten(const std::vector<T>& flat) {
        if (flat.size() != param_count()) throw std::runtime_error("parameter vector size mismatch");
        size_t k = 0;
        for (auto& l : layers_) {
            for (auto& w : l.W.a) w = flat[k++];
            for (auto& b : l.b) b = flat[k++];
        }
    }

  private:
    std::vector<int> sizes_;
    std::vector<Layer> layers_;
};

using Mlpd = Mlp<double>;
using Mlpf = Mlp<float>;

} // namespace wm
