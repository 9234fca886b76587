#include "mammofl/unet.hpp"

#include <algorithm>
#include <cmath>

namespace mammofl::nn {

namespace {

// ---------------------------------------------------------------------------
// Convolution kernels. Inner loops run over contiguous x so the compiler can
// vectorize them; accumulation order is fixed by the code, never by thread
// count or vector width choices at run time, keeping results reproducible.
// ---------------------------------------------------------------------------

template <typename T>
void conv3_forward_plane(const T* in, int H, int W, const T* w9, T* out) {
    for (int ky = 0; ky < 3; ++ky) {
        const T w0 = w9[ky * 3 + 0], w1 = w9[ky * 3 + 1], w2 = w9[ky * 3 + 2];
        for (int y = 0; y < H; ++y) {
            const int iy = y + ky - 1;
            if (iy < 0 || iy >= H) continue;
            const T* r = in + static_cast<std::size_t>(iy) * W;
            T* o = out + static_cast<std::size_t>(y) * W;
            if (W == 1) {
                o[0] += w1 * r[0];
                continue;
            }
            o[0] += w1 * r[0] + w2 * r[1];
            for (int x = 1; x < W - 1; ++x) o[x] += w0 * r[x - 1] + w1 * r[x] + w2 * r[x + 1];
            o[W - 1] += w0 * r[W - 2] + w1 * r[W - 1];
        }
    }
}

// Transposed pass: scatter gout through the flipped kernel into gin.
template <typename T>
void conv3_backward_input_plane(const T* gout, int H, int W, const T* w9, T* gin) {
    for (int ky = 0; ky < 3; ++ky) {
        const T w0 = w9[ky * 3 + 0], w1 = w9[ky * 3 + 1], w2 = w9[ky * 3 + 2];
        for (int iy = 0; iy < H; ++iy) {
            const int ry = iy + 1 - ky;
            if (ry < 0 || ry >= H) continue;
            const T* r = gout + static_cast<std::size_t>(ry) * W;
            T* o = gin + static_cast<std::size_t>(iy) * W;
            if (W == 1) {
                o[0] += w1 * r[0];
                continue;
            }
            o[0] += w1 * r[0] + w0 * r[1];
            for (int x = 1; x < W - 1; ++x) o[x] += w2 * r[x - 1] + w1 * r[x] + w0 * r[x + 1];
            o[W - 1] += w2 * r[W - 2] + w1 * r[W - 1];
        }
    }
}

// Blocked dot product with eight independent accumulators: vectorizable and
// with a reduction tree fixed by the code.
template <typename T>
void block_dot_acc(const T* a, const T* b, int len, T acc[8]) {
    int i = 0;
    for (; i + 8 <= len; i += 8)
        for (int j = 0; j < 8; ++j) acc[j] += a[i + j] * b[i + j];
    for (int j = 0; i + j < len; ++j) acc[j] += a[i + j] * b[i + j];
}

template <typename T>
T reduce8(const T acc[8]) {
    T s = acc[0];
    for (int j = 1; j < 8; ++j) s += acc[j];
    return s;
}

// gw[ky][kx] += sum_y,x gout[y][x] * in[y+ky-1][x+kx-1], one (ci,co) pair.
template <typename T>
void conv3_backward_weights_plane(const T* in, const T* gout, int H, int W, T* gw9) {
    for (int ky = 0; ky < 3; ++ky) {
        T a0[8] = {}, a1[8] = {}, a2[8] = {};
        for (int y = 0; y < H; ++y) {
            const int iy = y + ky - 1;
            if (iy < 0 || iy >= H) continue;
            const T* r = in + static_cast<std::size_t>(iy) * W;
            const T* g = gout + static_cast<std::size_t>(y) * W;
            if (W > 1) {
                block_dot_acc(g + 1, r, W - 1, a0);  // kx = 0
                block_dot_acc(g, r + 1, W - 1, a2);  // kx = 2
            }
            block_dot_acc(g, r, W, a1);  // kx = 1
        }
        gw9[ky * 3 + 0] += reduce8(a0);
        gw9[ky * 3 + 1] += reduce8(a1);
        gw9[ky * 3 + 2] += reduce8(a2);
    }
}

template <typename T>
void conv_forward_raw(const T* in, int N, int Ci, int H, int W, const T* w, const T* b, int Co,
                      int K, T* out) {
    const std::size_t plane = static_cast<std::size_t>(H) * W;
    for (int n = 0; n < N; ++n) {
        for (int co = 0; co < Co; ++co) {
            T* op = out + (static_cast<std::size_t>(n) * Co + co) * plane;
            std::fill(op, op + plane, b[co]);
            for (int ci = 0; ci < Ci; ++ci) {
                const T* ip = in + (static_cast<std::size_t>(n) * Ci + ci) * plane;
                const T* wp = w + (static_cast<std::size_t>(co) * Ci + ci) * K * K;
                if (K == 3) {
                    conv3_forward_plane(ip, H, W, wp, op);
                } else {
                    const T w0 = wp[0];
                    for (std::size_t i = 0; i < plane; ++i) op[i] += w0 * ip[i];
                }
            }
        }
    }
}

template <typename T>
void conv_backward_input_raw(const T* gout, int N, int Co, int H, int W, const T* w, int Ci, int K,
                             T* gin) {
    const std::size_t plane = static_cast<std::size_t>(H) * W;
    std::fill(gin, gin + static_cast<std::size_t>(N) * Ci * plane, T(0));
    for (int n = 0; n < N; ++n) {
        for (int ci = 0; ci < Ci; ++ci) {
            T* gp = gin + (static_cast<std::size_t>(n) * Ci + ci) * plane;
            for (int co = 0; co < Co; ++co) {
                const T* op = gout + (static_cast<std::size_t>(n) * Co + co) * plane;
                const T* wp = w + (static_cast<std::size_t>(co) * Ci + ci) * K * K;
                if (K == 3) {
                    conv3_backward_input_plane(op, H, W, wp, gp);
                } else {
                    const T w0 = wp[0];
                    for (std::size_t i = 0; i < plane; ++i) gp[i] += w0 * op[i];
                }
            }
        }
    }
}

template <typename T>
void conv_backward_weights_raw(const T* in, const T* gout, int N, int Ci, int Co, int H, int W,
                               int K, T* gw, T* gb) {
    const std::size_t plane = static_cast<std::size_t>(H) * W;
    for (int n = 0; n < N; ++n) {
        for (int co = 0; co < Co; ++co) {
            const T* op = gout + (static_cast<std::size_t>(n) * Co + co) * plane;
            {
                T acc[8] = {};
                int i = 0;
                for (; i + 8 <= static_cast<int>(plane); i += 8)
                    for (int j = 0; j < 8; ++j) acc[j] += op[i + j];
                for (int j = 0; i + j < static_cast<int>(plane); ++j) acc[j] += op[i + j];
                gb[co] += reduce8(acc);
            }
            for (int ci = 0; ci < Ci; ++ci) {
                const T* ip = in + (static_cast<std::size_t>(n) * Ci + ci) * plane;
                T* wp = gw + (static_cast<std::size_t>(co) * Ci + ci) * K * K;
                if (K == 3) {
                    conv3_backward_weights_plane(ip, op, H, W, wp);
                } else {
                    T acc[8] = {};
                    block_dot_acc(op, ip, static_cast<int>(plane), acc);
                    wp[0] += reduce8(acc);
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------

template <typename T>
void relu_inplace(Tens<T>& t) {
    for (T& v : t.data) v = v > T(0) ? v : T(0);
}

template <typename T>
Tens<T> maxpool2(const Tens<T>& in, std::vector<int>& argmax) {
    const int N = in.dim(0), C = in.dim(1), H = in.dim(2), W = in.dim(3);
    const int Ho = H / 2, Wo = W / 2;
    Tens<T> out = Tens<T>::zeros({N, C, Ho, Wo});
    argmax.assign(static_cast<std::size_t>(out.size()), 0);
    const T* ip = in.data.data();
    T* op = out.data.data();
    std::size_t o = 0;
    for (int nc = 0; nc < N * C; ++nc) {
        const T* p = ip + static_cast<std::size_t>(nc) * H * W;
        for (int y = 0; y < Ho; ++y) {
            for (int x = 0; x < Wo; ++x, ++o) {
                // ties resolve to the first candidate in scan order
                int best = (2 * y) * W + 2 * x;
                T bv = p[best];
                const int cand[3] = {(2 * y) * W + 2 * x + 1, (2 * y + 1) * W + 2 * x,
                                     (2 * y + 1) * W + 2 * x + 1};
                for (int c : cand) {
                    if (p[c] > bv) {
                        bv = p[c];
                        best = c;
                    }
                }
                op[o] = bv;
                argmax[o] = nc * H * W + best;
            }
        }
    }
    return out;
}

template <typename T>
Tens<T> maxpool2_grad(const Tens<T>& gout, const std::vector<int>& argmax,
                      const std::vector<int>& in_dims) {
    Tens<T> gin = Tens<T>::zeros(in_dims);
    for (std::size_t i = 0; i < gout.data.size(); ++i)
        gin.data[static_cast<std::size_t>(argmax[i])] += gout.data[i];
    return gin;
}

template <typename T>
Tens<T> upsample2(const Tens<T>& in) {
    const int N = in.dim(0), C = in.dim(1), H = in.dim(2), W = in.dim(3);
    Tens<T> out = Tens<T>::zeros({N, C, 2 * H, 2 * W});
    for (int nc = 0; nc < N * C; ++nc) {
        const T* p = in.data.data() + static_cast<std::size_t>(nc) * H * W;
        T* q = out.data.data() + static_cast<std::size_t>(nc) * 4 * H * W;
        for (int y = 0; y < 2 * H; ++y) {
            const T* r = p + static_cast<std::size_t>(y / 2) * W;
            T* o = q + static_cast<std::size_t>(y) * 2 * W;
            for (int x = 0; x < 2 * W; ++x) o[x] = r[x / 2];
        }
    }
    return out;
}

template <typename T>
Tens<T> upsample2_grad(const Tens<T>& gout) {
    const int N = gout.dim(0), C = gout.dim(1), Ho = gout.dim(2), Wo = gout.dim(3);
    const int H = Ho / 2, W = Wo / 2;
    Tens<T> gin = Tens<T>::zeros({N, C, H, W});
    for (int nc = 0; nc < N * C; ++nc) {
        const T* g = gout.data.data() + static_cast<std::size_t>(nc) * Ho * Wo;
        T* o = gin.data.data() + static_cast<std::size_t>(nc) * H * W;
        for (int y = 0; y < H; ++y) {
            for (int x = 0; x < W; ++x) {
                const T* r0 = g + static_cast<std::size_t>(2 * y) * Wo + 2 * x;
                const T* r1 = g + static_cast<std::size_t>(2 * y + 1) * Wo + 2 * x;
                o[static_cast<std::size_t>(y) * W + x] = (r0[0] + r0[1]) + (r1[0] + r1[1]);
            }
        }
    }
    return gin;
}

template <typename T>
Tens<T> concat_channels(const Tens<T>& a, const Tens<T>& b) {
    const int N = a.dim(0), Ca = a.dim(1), Cb = b.dim(1), H = a.dim(2), W = a.dim(3);
    Tens<T> out = Tens<T>::zeros({N, Ca + Cb, H, W});
    const std::size_t plane = static_cast<std::size_t>(H) * W;
    for (int n = 0; n < N; ++n) {
        std::copy_n(a.data.data() + static_cast<std::size_t>(n) * Ca * plane, Ca * plane,
                    out.data.data() + static_cast<std::size_t>(n) * (Ca + Cb) * plane);
        std::copy_n(b.data.data() + static_cast<std::size_t>(n) * Cb * plane, Cb * plane,
                    out.data.data() + (static_cast<std::size_t>(n) * (Ca + Cb) + Ca) * plane);
    }
    return out;
}

template <typename T>
void split_channels(const Tens<T>& g, int Ca, Tens<T>& ga, Tens<T>& gb) {
    const int N = g.dim(0), C = g.dim(1), H = g.dim(2), W = g.dim(3);
    const int Cb = C - Ca;
    ga = Tens<T>::zeros({N, Ca, H, W});
    gb = Tens<T>::zeros({N, Cb, H, W});
    const std::size_t plane = static_cast<std::size_t>(H) * W;
    for (int n = 0; n < N; ++n) {
        std::copy_n(g.data.data() + static_cast<std::size_t>(n) * C * plane, Ca * plane,
                    ga.data.data() + static_cast<std::size_t>(n) * Ca * plane);
        std::copy_n(g.data.data() + (static_cast<std::size_t>(n) * C + Ca) * plane, Cb * plane,
                    gb.data.data() + static_cast<std::size_t>(n) * Cb * plane);
    }
}

template <typename T>
T stable_sigmoid(T z) {
    if (z >= T(0)) return T(1) / (T(1) + std::exp(-z));
    const T e = std::exp(z);
    return e / (T(1) + e);
}

template <typename T>
int kernel_size(const Tens<T>& kernel) {
    if (kernel.dims.size() != 4 || kernel.dim(2) != kernel.dim(3))
        throw ConfigError("conv kernel must be OIHW with square spatial dims, got " +
                          kernel.shape_str());
    const int k = kernel.dim(2);
    if (k != 1 && k != 3) throw ConfigError("conv kernel size must be 1 or 3");
    return k;
}

}  // namespace

void UNetConfig::validate() const {
    if (levels < 1) throw ConfigError("unet levels must be >= 1");
    if (base_channels < 1) throw ConfigError("unet base_channels must be >= 1");
    if (in_channels < 1 || out_channels < 1) throw ConfigError("unet channel counts must be >= 1");
    if (input_size < 1 || (input_size & (input_size - 1)) != 0)
        throw ConfigError("unet input_size must be a positive power of two");
    if (input_size % (1 << levels) != 0)
        throw ConfigError("unet input_size must be divisible by 2^levels");
}

template <typename T>
Tens<T> conv2d_forward(const Tens<T>& input, const Tens<T>& kernel, const Tens<T>& bias) {
    if (input.dims.size() != 4) throw ConfigError("conv input must be NCHW, got " + input.shape_str());
    const int K = kernel_size(kernel);
    const int N = input.dim(0), Ci = input.dim(1), H = input.dim(2), W = input.dim(3);
    const int Co = kernel.dim(0);
    if (kernel.dim(1) != Ci)
        throw ConfigError("conv kernel expects " + std::to_string(kernel.dim(1)) +
                          " input channels, got " + std::to_string(Ci));
    if (bias.dims.size() != 1 || bias.dim(0) != Co)
        throw ConfigError("conv bias must have one value per output channel");
    Tens<T> out = Tens<T>::zeros({N, Co, H, W});
    conv_forward_raw(input.data.data(), N, Ci, H, W, kernel.data.data(), bias.data.data(), Co, K,
                     out.data.data());
    return out;
}

template <typename T>
double bce_loss(const Tens<T>& pred, const Tens<T>& target) {
    if (!pred.same_shape(target))
        throw ConfigError("bce shapes differ: " + pred.shape_str() + " vs " + target.shape_str());
    if (pred.size() == 0) throw ConfigError("bce on empty tensor");
    const T lo = static_cast<T>(kProbFloor);
    const T hi = T(1) - static_cast<T>(kProbFloor);
    double sum = 0.0;
    for (std::int64_t i = 0; i < pred.size(); ++i) {
        const T p = std::clamp(pred.data[i], lo, hi);
        const double t = static_cast<double>(target.data[i]);
        sum -= t * std::log(static_cast<double>(p)) + (1.0 - t) * std::log(1.0 - static_cast<double>(p));
    }
    return sum / static_cast<double>(pred.size());
}

template <typename T>
Tens<T> bce_loss_grad(const Tens<T>& pred, const Tens<T>& target) {
    if (!pred.same_shape(target))
        throw ConfigError("bce shapes differ: " + pred.shape_str() + " vs " + target.shape_str());
    const T lo = static_cast<T>(kProbFloor);
    const T hi = T(1) - static_cast<T>(kProbFloor);
    const T inv_n = T(1) / static_cast<T>(pred.size());
    Tens<T> g = Tens<T>::zeros(pred.dims);
    for (std::int64_t i = 0; i < pred.size(); ++i) {
        const T p = pred.data[i];
        if (p <= lo || p >= hi) continue;  // clamp region: exactly zero slope
        const T t = target.data[i];
        g.data[i] = (-t / p + (T(1) - t) / (T(1) - p)) * inv_n;
    }
    return g;
}

template <typename T>
UNet<T>::UNet(UNetConfig cfg) : cfg_(cfg) {
    cfg_.validate();
    weights_ = weight_template(cfg_);
}

template <typename T>
WeightMap<T> UNet<T>::weight_template(const UNetConfig& cfg) {
    cfg.validate();
    WeightMap<T> w;
    auto add_conv = [&w](const std::string& name, int co, int ci, int k) {
        w.entries.emplace(name + ".weight", Tens<T>::zeros({co, ci, k, k}));
        w.entries.emplace(name + ".bias", Tens<T>::zeros({co}));
    };
    int ch = cfg.in_channels;
    for (int i = 0; i < cfg.levels; ++i) {
        const int c = cfg.base_channels << i;
        add_conv("enc" + std::to_string(i) + ".conv1", c, ch, 3);
        add_conv("enc" + std::to_string(i) + ".conv2", c, c, 3);
        ch = c;
    }
    const int cb = cfg.base_channels << cfg.levels;
    add_conv("bottleneck.conv1", cb, ch, 3);
    add_conv("bottleneck.conv2", cb, cb, 3);
    for (int i = cfg.levels - 1; i >= 0; --i) {
        const int c = cfg.base_channels << i;
        add_conv("dec" + std::to_string(i) + ".up", c, 2 * c, 3);
        add_conv("dec" + std::to_string(i) + ".conv1", c, 2 * c, 3);
        add_conv("dec" + std::to_string(i) + ".conv2", c, c, 3);
    }
    add_conv("head", cfg.out_channels, cfg.base_channels, 1);
    return w;
}

template <typename T>
void UNet<T>::init_weights(Rng& rng) {
    for (auto& [name, t] : weights_.entries) {
        if (name.ends_with(".bias")) {
            std::fill(t.data.begin(), t.data.end(), T(0));
        } else {
            const int fan_in = t.dim(1) * t.dim(2) * t.dim(3);
            const double bound = std::sqrt(6.0 / fan_in);
            for (T& v : t.data) v = static_cast<T>(rng.uniform(-bound, bound));
        }
    }
}

template <typename T>
void UNet<T>::set_weights(WeightMap<T> w) {
    if (!w.same_structure(weights_))
        throw ConfigError("weight set does not match this UNet configuration");
    weights_ = std::move(w);
    forward_done_ = false;
}

template <typename T>
Tens<T> UNet<T>::conv_relu(const std::string& name, Tens<T> x) {
    const Tens<T>& w = weights_.entries.at(name + ".weight");
    const Tens<T>& b = weights_.entries.at(name + ".bias");
    Tens<T> out = conv2d_forward(x, w, b);
    relu_inplace(out);
    require_finite(out, name);
    conv_acts_.push_back({name, ConvAct{std::move(x), out}});
    return out;
}

template <typename T>
Tens<T> UNet<T>::forward(const Tens<T>& batch) {
    if (batch.dims.size() != 4 || batch.dim(1) != cfg_.in_channels ||
        batch.dim(2) != cfg_.input_size || batch.dim(3) != cfg_.input_size)
        throw ConfigError("unet batch must be Nx" + std::to_string(cfg_.in_channels) + "x" +
                          std::to_string(cfg_.input_size) + "x" + std::to_string(cfg_.input_size) +
                          ", got " + batch.shape_str());
    conv_acts_.clear();
    pool_acts_.clear();

    std::vector<Tens<T>> skips;
    Tens<T> x = batch;
    for (int i = 0; i < cfg_.levels; ++i) {
        const std::string enc = "enc" + std::to_string(i);
        x = conv_relu(enc + ".conv1", std::move(x));
        x = conv_relu(enc + ".conv2", std::move(x));
        skips.push_back(x);
        PoolAct pa;
        pa.in_dims = x.dims;
        x = maxpool2(x, pa.argmax);
        pool_acts_.push_back(std::move(pa));
    }
    x = conv_relu("bottleneck.conv1", std::move(x));
    x = conv_relu("bottleneck.conv2", std::move(x));
    for (int i = cfg_.levels - 1; i >= 0; --i) {
        const std::string dec = "dec" + std::to_string(i);
        x = upsample2(x);
        x = conv_relu(dec + ".up", std::move(x));
        x = concat_channels(skips[static_cast<std::size_t>(i)], x);
        x = conv_relu(dec + ".conv1", std::move(x));
        x = conv_relu(dec + ".conv2", std::move(x));
    }

    head_in_ = std::move(x);
    Tens<T> z = conv2d_forward(head_in_, weights_.entries.at("head.weight"),
                               weights_.entries.at("head.bias"));
    require_finite(z, "head");
    const T lo = static_cast<T>(kProbFloor);
    const T hi = T(1) - static_cast<T>(kProbFloor);
    for (T& v : z.data) v = std::clamp(stable_sigmoid(v), lo, hi);
    prob_out_ = std::move(z);
    forward_done_ = true;
    return prob_out_;
}

template <typename T>
Tens<T> UNet<T>::conv_relu_grad(const std::string& name, const Tens<T>& gout, WeightMap<T>& grads) {
    // walk the stash back to front
    auto& [stash_name, act] = conv_acts_.back();
    if (stash_name != name) throw TrainingError("backward order mismatch at " + name);

    Tens<T> gz = gout;
    for (std::int64_t i = 0; i < gz.size(); ++i)
        if (!(act.out.data[i] > T(0))) gz.data[i] = T(0);

    const Tens<T>& w = weights_.entries.at(name + ".weight");
    const int K = w.dim(2);
    const int N = act.in.dim(0), Ci = act.in.dim(1), H = act.in.dim(2), W = act.in.dim(3);
    const int Co = w.dim(0);

    conv_backward_weights_raw(act.in.data.data(), gz.data.data(), N, Ci, Co, H, W, K,
                              grads.entries.at(name + ".weight").data.data(),
                              grads.entries.at(name + ".bias").data.data());
    Tens<T> gin = Tens<T>::zeros(act.in.dims);
    conv_backward_input_raw(gz.data.data(), N, Co, H, W, w.data.data(), Ci, K, gin.data.data());
    conv_acts_.pop_back();
    return gin;
}

template <typename T>
WeightMap<T> UNet<T>::backward(const Tens<T>& grad_output) {
    if (!forward_done_) throw TrainingError("backward without a completed forward pass");
    if (!grad_output.same_shape(prob_out_))
        throw ConfigError("grad_output shape " + grad_output.shape_str() + " does not match output");
    forward_done_ = false;

    WeightMap<T> grads = weight_template(cfg_);

    // sigmoid: dp/dz = p(1-p); the prob clamp's saturated region was already
    // zeroed by bce_loss_grad (any pixel at the clamp boundary has zero slope)
    Tens<T> gz = grad_output;
    for (std::int64_t i = 0; i < gz.size(); ++i) {
        const T p = prob_out_.data[i];
        gz.data[i] *= p * (T(1) - p);
    }

    // head (1x1 conv, no relu)
    {
        const Tens<T>& w = weights_.entries.at("head.weight");
        const int N = head_in_.dim(0), Ci = head_in_.dim(1), H = head_in_.dim(2),
                  W = head_in_.dim(3);
        conv_backward_weights_raw(head_in_.data.data(), gz.data.data(), N, Ci, cfg_.out_channels, H,
                                  W, 1, grads.entries.at("head.weight").data.data(),
                                  grads.entries.at("head.bias").data.data());
        Tens<T> gin = Tens<T>::zeros(head_in_.dims);
        conv_backward_input_raw(gz.data.data(), N, cfg_.out_channels, H, W, w.data.data(), Ci, 1,
                                gin.data.data());
        gz = std::move(gin);
    }

    std::vector<Tens<T>> skip_grads(static_cast<std::size_t>(cfg_.levels));
    for (int i = 0; i <= cfg_.levels - 1; ++i) {
        const std::string dec = "dec" + std::to_string(i);
        gz = conv_relu_grad(dec + ".conv2", gz, grads);
        gz = conv_relu_grad(dec + ".conv1", gz, grads);
        Tens<T> gskip, gup;
        split_channels(gz, cfg_.base_channels << i, gskip, gup);
        skip_grads[static_cast<std::size_t>(i)] = std::move(gskip);
        gz = conv_relu_grad(dec + ".up", gup, grads);
        gz = upsample2_grad(gz);
    }
    gz = conv_relu_grad("bottleneck.conv2", gz, grads);
    gz = conv_relu_grad("bottleneck.conv1", gz, grads);
    for (int i = cfg_.levels - 1; i >= 0; --i) {
        const std::string enc = "enc" + std::to_string(i);
        const PoolAct& pa = pool_acts_[static_cast<std::size_t>(i)];
        gz = maxpool2_grad(gz, pa.argmax, pa.in_dims);
        // skip connection joins here
        for (std::int64_t k = 0; k < gz.size(); ++k)
            gz.data[k] += skip_grads[static_cast<std::size_t>(i)].data[k];
        gz = conv_relu_grad(enc + ".conv2", gz, grads);
        gz = conv_relu_grad(enc + ".conv1", gz, grads);
    }

    for (const auto& [name, g] : grads.entries)
        if (!g.all_finite()) throw TrainingError("non-finite gradient in parameter " + name);
    return grads;
}

template <typename T>
Tens<T> unet_forward(const UNetConfig& cfg, const WeightMap<T>& weights, const Tens<T>& batch) {
    UNet<T> net(cfg);
    net.set_weights(weights);
    return net.forward(batch);
}

template class UNet<float>;
template class UNet<double>;

template Tens<float> conv2d_forward(const Tens<float>&, const Tens<float>&, const Tens<float>&);
template Tens<double> conv2d_forward(const Tens<double>&, const Tens<double>&, const Tens<double>&);
template double bce_loss(const Tens<float>&, const Tens<float>&);
template double bce_loss(const Tens<double>&, const Tens<double>&);
template Tens<float> bce_loss_grad(const Tens<float>&, const Tens<float>&);
template Tens<double> bce_loss_grad(const Tens<double>&, const Tens<double>&);
template Tens<float> unet_forward(const UNetConfig&, const WeightMap<float>&, const Tens<float>&);
template Tens<double> unet_forward(const UNetConfig&, const WeightMap<double>&, const Tens<double>&);

}  // namespace mammofl::nn
