#include "mammofl/train.hpp"

#include <numeric>

namespace mammofl::nn {

namespace {

/// Copy a CxHxW sample into batch slot n, optionally mirrored.
template <typename T>
void place_sample(const Tens<T>& src, Tens<T>& batch, int n, bool hflip, bool vflip) {
    const int C = src.dim(0), H = src.dim(1), W = src.dim(2);
    const std::size_t plane = static_cast<std::size_t>(H) * W;
    for (int c = 0; c < C; ++c) {
        const T* s = src.data.data() + static_cast<std::size_t>(c) * plane;
        T* d = batch.data.data() + (static_cast<std::size_t>(n) * C + c) * plane;
        for (int y = 0; y < H; ++y) {
            const T* row = s + static_cast<std::size_t>(vflip ? H - 1 - y : y) * W;
            T* out = d + static_cast<std::size_t>(y) * W;
            if (hflip) {
                for (int x = 0; x < W; ++x) out[x] = row[W - 1 - x];
            } else {
                std::copy_n(row, W, out);
            }
        }
    }
}

}  // namespace

template <typename T>
double train_epoch(UNet<T>& net, AdamState<T>& opt, const std::vector<TrainPair<T>>& data,
                   const TrainHyper& hyper, Rng& rng) {
    if (data.empty()) throw TrainingError("train_epoch on an empty partition");
    if (hyper.batch_size < 1) throw ConfigError("batch_size must be >= 1");
    const int C = data[0].image.dim(0), H = data[0].image.dim(1), W = data[0].image.dim(2);

    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order);

    double loss_sum = 0.0;
    std::size_t cursor = 0;
    while (cursor < order.size()) {
        const int n = static_cast<int>(
            std::min<std::size_t>(hyper.batch_size, order.size() - cursor));
        Tens<T> x = Tens<T>::zeros({n, C, H, W});
        Tens<T> t = Tens<T>::zeros({n, C, H, W});
        for (int i = 0; i < n; ++i) {
            const TrainPair<T>& s = data[order[cursor + i]];
            const bool hflip = hyper.augment && rng.bernoulli(0.5);
            const bool vflip = hyper.augment && rng.bernoulli(0.5);
            place_sample(s.image, x, i, hflip, vflip);
            place_sample(s.target, t, i, hflip, vflip);
        }
        Tens<T> pred = net.forward(x);
        loss_sum += bce_loss(pred, t) * n;
        WeightMap<T> grads = net.backward(bce_loss_grad(pred, t));
        adam_step(opt, net.mutable_weights(), grads);
        cursor += static_cast<std::size_t>(n);
    }
    return loss_sum / static_cast<double>(data.size());
}

template <typename T>
double eval_loss(UNet<T>& net, const std::vector<TrainPair<T>>& data, int batch_size) {
    if (data.empty()) throw TrainingError("eval_loss on an empty partition");
    const int C = data[0].image.dim(0), H = data[0].image.dim(1), W = data[0].image.dim(2);
    double loss_sum = 0.0;
    std::size_t cursor = 0;
    while (cursor < data.size()) {
        const int n =
            static_cast<int>(std::min<std::size_t>(batch_size, data.size() - cursor));
        Tens<T> x = Tens<T>::zeros({n, C, H, W});
        Tens<T> t = Tens<T>::zeros({n, C, H, W});
        for (int i = 0; i < n; ++i) {
            place_sample(data[cursor + i].image, x, i, false, false);
            place_sample(data[cursor + i].target, t, i, false, false);
        }
        loss_sum += bce_loss(net.forward(x), t) * n;
        cursor += static_cast<std::size_t>(n);
    }
    return loss_sum / static_cast<double>(data.size());
}

template double train_epoch(UNet<float>&, AdamState<float>&, const std::vector<TrainPair<float>>&,
                            const TrainHyper&, Rng&);
template double train_epoch(UNet<double>&, AdamState<double>&,
                            const std::vector<TrainPair<double>>&, const TrainHyper&, Rng&);
template double eval_loss(UNet<float>&, const std::vector<TrainPair<float>>&, int);
template double eval_loss(UNet<double>&, const std::vector<TrainPair<double>>&, int);

}  // namespace mammofl::nn
