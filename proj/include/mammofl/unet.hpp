#pragma once

#include <string>
#include <vector>

#include "mammofl/rng.hpp"
#include "mammofl/tensor.hpp"
#include "mammofl/weights.hpp"

namespace mammofl::nn {

/// Architecture of one segmentation network. Both cascade stages use this
/// config with independently trained weights.
struct UNetConfig {
    int input_size = 64;  // H == W, power of two
    int levels = 3;       // number of 2x downsamplings
    int base_channels = 8;
    int in_channels = 1;
    int out_channels = 1;

    void validate() const;
    bool operator==(const UNetConfig&) const = default;
};

/// Probabilities leaving the network are clamped into this band, so outputs
/// are strictly inside (0,1) even where float sigmoid would saturate. The
/// clamp's gradient is exactly zero outside the band.
inline constexpr double kProbFloor = 1e-7;

/// 3x3 (pad 1) or 1x1 convolution, NCHW in, OIHW kernel, bias per output
/// channel. Output spatial size equals input spatial size.
template <typename T>
Tens<T> conv2d_forward(const Tens<T>& input, const Tens<T>& kernel, const Tens<T>& bias);

/// Mean per-pixel binary cross-entropy. Predictions are clamped to
/// [kProbFloor, 1-kProbFloor] before the logs.
template <typename T>
double bce_loss(const Tens<T>& pred, const Tens<T>& target);

/// d(bce_loss)/d(pred); exactly zero where the clamp saturates.
template <typename T>
Tens<T> bce_loss_grad(const Tens<T>& pred, const Tens<T>& target);

/// Plain double-conv U-Net: per level two 3x3 conv+ReLU blocks, 2x2 max-pool
/// down, nearest 2x + 3x3 conv up, channel concat skips, 1x1 conv head with
/// a sigmoid. No normalization layers, so samples in a batch never interact.
template <typename T>
class UNet {
public:
    explicit UNet(UNetConfig cfg);

    /// Kaiming-uniform kernels (bound sqrt(6/fan_in)), zero biases. Draws
    /// happen in canonical parameter order, row-major within each tensor.
    void init_weights(Rng& rng);

    const UNetConfig& config() const { return cfg_; }
    const WeightMap<T>& weights() const { return weights_; }
    WeightMap<T>& mutable_weights() { return weights_; }
    void set_weights(WeightMap<T> w);

    /// Expected parameter shapes for this config, in canonical order.
    static WeightMap<T> weight_template(const UNetConfig& cfg);

    /// Forward pass over an NCHW batch; activations are retained for
    /// backward(). Output is per-pixel probabilities in (0,1).
    Tens<T> forward(const Tens<T>& batch);

    /// Reverse-mode gradients of a scalar loss wrt every weight tensor,
    /// given dLoss/d(output). Requires a completed forward pass.
    WeightMap<T> backward(const Tens<T>& grad_output);

private:
    struct ConvAct {
        Tens<T> in;   // conv input
        Tens<T> out;  // post-activation output
    };
    struct PoolAct {
        std::vector<int> argmax;  // flat input index per output element
        std::vector<int> in_dims;
    };

    Tens<T> conv_relu(const std::string& name, Tens<T> x);
    Tens<T> conv_relu_grad(const std::string& name, const Tens<T>& gout, WeightMap<T>& grads);

    UNetConfig cfg_;
    WeightMap<T> weights_;

    // forward stash, rebuilt every pass
    std::vector<std::pair<std::string, ConvAct>> conv_acts_;
    std::vector<PoolAct> pool_acts_;
    Tens<T> head_in_;
    Tens<T> prob_out_;
    bool forward_done_ = false;
};

/// Stateless forward pass with externally held weights.
template <typename T>
Tens<T> unet_forward(const UNetConfig& cfg, const WeightMap<T>& weights, const Tens<T>& batch);

extern template class UNet<float>;
extern template class UNet<double>;

}  // namespace mammofl::nn
