#pragma once

#include <vector>

#include "mammofl/adam.hpp"
#include "mammofl/rng.hpp"
#include "mammofl/unet.hpp"

namespace mammofl::nn {

/// One (input, target) pair, each CxHxW with C=1; targets are 0/1 rasters.
template <typename T>
struct TrainPair {
    Tens<T> image;
    Tens<T> target;
};

struct TrainHyper {
    int batch_size = 16;
    bool augment = true;  // independent h/v flips, p=0.5 each
};

/// One pass over the partition: shuffle with the supplied stream, batch
/// (last short batch kept), flip-augment image and target identically,
/// forward, BCE, backward, Adam. Returns the sample-weighted mean loss.
template <typename T>
double train_epoch(UNet<T>& net, AdamState<T>& opt, const std::vector<TrainPair<T>>& data,
                   const TrainHyper& hyper, Rng& rng);

/// Mean BCE loss over a partition without updating anything.
template <typename T>
double eval_loss(UNet<T>& net, const std::vector<TrainPair<T>>& data, int batch_size);

extern template double train_epoch(UNet<float>&, AdamState<float>&,
                                   const std::vector<TrainPair<float>>&, const TrainHyper&, Rng&);
extern template double train_epoch(UNet<double>&, AdamState<double>&,
                                   const std::vector<TrainPair<double>>&, const TrainHyper&, Rng&);
extern template double eval_loss(UNet<float>&, const std::vector<TrainPair<float>>&, int);
extern template double eval_loss(UNet<double>&, const std::vector<TrainPair<double>>&, int);

}  // namespace mammofl::nn
