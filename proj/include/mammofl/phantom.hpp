#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mammofl/image.hpp"
#include "mammofl/rng.hpp"

namespace mammofl::phantom {

enum class ViewStyle { CC, MLO };  // MLO adds a pectoral wedge

struct Range {
    double lo = 0.0;
    double hi = 0.0;
};

struct IntRange {
    int lo = 0;
    int hi = 0;
};

/// Generation recipe for one institution's cohort. The two default profiles
/// (see harness defaults) differ in view style, gain, noise, skin-rim
/// brightness and dense-blob statistics, so cross-institution domain shift
/// is real and survives min-max normalization.
struct InstitutionProfile {
    std::string name = "inst";
    ViewStyle view_style = ViewStyle::CC;
    double intensity_gain = 1.0;
    double noise_sigma = 0.012;
    Range breast_semi_x{0.55, 0.80};  // fraction of width
    Range breast_semi_y{0.32, 0.46};  // fraction of height
    IntRange dense_blob_count{1, 6};
    Range blob_sigma{3.0, 8.0};  // pixels
    double tag_probability = 0.5;
    int n_subjects = 100;
    int images_per_subject = 2;
    int image_size = 64;

    // raw intensity structure; everything but the background scales by gain
    double background_level = 0.02;
    double fatty_level = 0.55;
    double dense_level = 0.80;
    double rim_level = 0.98;   // bright skin line band; 0 disables
    double wedge_level = 0.62; // pectoral wedge (MLO only)
    double tag_level = 1.00;

    void validate() const;
};

/// One synthetic mammogram with exact geometric ground truth.
struct PhantomSample {
    std::string subject_id;
    Image image;  // raw, pre-normalization
    BinaryMask breast_truth;
    BinaryMask dense_truth;  // subset of breast_truth by construction
    double pd_truth = 0.0;   // 100 * |dense| / |breast|, exact
};

/// Deterministic cohort generation: every draw comes from streams derived
/// from (seed, profile name, subject index, image index), so the same
/// (profile, seed) reproduces the dataset byte for byte.
std::vector<PhantomSample> generate_dataset(const InstitutionProfile& profile, std::uint64_t seed);

/// Directory layout: <root>/<subject_id>/<idx>.pgm with sidecars
/// <idx>_breast.pgm, <idx>_dense.pgm, plus manifest.txt listing
/// "subject image breast dense pd" per line. Images are 16-bit PGM, masks
/// 8-bit. Loading verifies the stored pd against the masks.
void write_dataset(const std::string& dir, const std::vector<PhantomSample>& samples);
std::vector<PhantomSample> read_dataset(const std::string& dir);

}  // namespace mammofl::phantom
