#include "mammofl/cascade.hpp"

#include <algorithm>
#include <exception>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <thread>

#include "mammofl/serialize.hpp"

namespace mammofl::cascade {

namespace {

nn::Tensor image_to_tensor(const Image& img) {
    std::vector<float> data = img.pixels;
    return nn::Tensor({1, img.height, img.width}, std::move(data));
}

nn::Tensor mask_to_tensor(const BinaryMask& mask) {
    std::vector<float> data(mask.bits.size());
    for (std::size_t i = 0; i < mask.bits.size(); ++i) data[i] = mask.bits[i] ? 1.0f : 0.0f;
    return nn::Tensor({1, mask.height, mask.width}, std::move(data));
}

BinaryMask prob_to_mask(const nn::Tensor& prob, double threshold) {
    const int H = prob.dim(prob.dims.size() == 4 ? 2 : 1);
    const int W = prob.dim(prob.dims.size() == 4 ? 3 : 2);
    BinaryMask mask(W, H);
    for (std::size_t i = 0; i < mask.bits.size(); ++i)
        mask.bits[i] = prob.data[i] >= static_cast<float>(threshold) ? 1 : 0;
    return mask;
}

Image tensor_to_image(const nn::Tensor& t, const Image& geometry_source) {
    Image img(geometry_source.width, geometry_source.height);
    img.original_width = geometry_source.original_width;
    img.original_height = geometry_source.original_height;
    img.pixels.assign(t.data.begin(), t.data.end());
    return img;
}

/// 1px morphological dilation or erosion (8-neighborhood), used only for
/// optional training-label noise.
BinaryMask morph1(const BinaryMask& m, bool dilate) {
    BinaryMask out(m.width, m.height);
    for (int y = 0; y < m.height; ++y) {
        for (int x = 0; x < m.width; ++x) {
            std::uint8_t v = dilate ? 0 : 1;
            for (int dy = -1; dy <= 1; ++dy) {
                for (int dx = -1; dx <= 1; ++dx) {
                    const int ny = y + dy, nx = x + dx;
                    std::uint8_t b = 0;
                    if (ny >= 0 && ny < m.height && nx >= 0 && nx < m.width) b = m.at(ny, nx);
                    if (dilate)
                        v |= b;
                    else
                        v &= b;
                }
            }
            out.at(y, x) = v;
        }
    }
    return out;
}

}  // namespace

void CascadeModel::validate() const {
    breast_config.validate();
    dense_config.validate();
    if (breast_config.input_size != dense_config.input_size)
        throw ConfigError("cascade stages must share input_size");
    if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("threshold must be in (0,1)");
}

std::optional<double> percent_density(const BinaryMask& breast, const BinaryMask& dense) {
    if (breast.width != dense.width || breast.height != dense.height)
        throw ConfigError("percent_density on masks with different dimensions");
    std::int64_t b = 0, inter = 0;
    for (std::size_t i = 0; i < breast.bits.size(); ++i) {
        b += breast.bits[i];
        inter += breast.bits[i] & dense.bits[i];
    }
    if (b == 0) return std::nullopt;
    return 100.0 * static_cast<double>(inter) / static_cast<double>(b);
}

Image preprocess_input(const Image& raw, int input_size, double tag_threshold) {
    Image img = prep::remove_metal_tag(raw, tag_threshold);
    img = prep::resize(img, input_size, input_size);
    return prep::minmax_normalize(img);
}

PDResult infer_with_predictors(int input_size, const StagePredictor& breast_stage,
                               const StagePredictor& dense_stage, double threshold,
                               const Image& raw, double tag_threshold) {
    const Image stage1 = preprocess_input(raw, input_size, tag_threshold);

    nn::Tensor x1({1, 1, input_size, input_size}, std::vector<float>(stage1.pixels));
    const nn::Tensor p1 = breast_stage(x1);
    BinaryMask breast_net = prob_to_mask(p1, threshold);

    PDResult result;
    const int ow = raw.original_width, oh = raw.original_height;
    if (breast_net.area() == 0) {
        // degenerate prediction: flag, do not crash
        result.breast_mask = BinaryMask(ow, oh);
        result.dense_mask = BinaryMask(ow, oh);
        return result;
    }

    const Image stage2 = prep::apply_breast_mask(stage1, breast_net);
    nn::Tensor x2({1, 1, input_size, input_size}, std::vector<float>(stage2.pixels));
    const nn::Tensor p2 = dense_stage(x2);
    BinaryMask dense_net = prob_to_mask(p2, threshold);
    for (std::size_t i = 0; i < dense_net.bits.size(); ++i) dense_net.bits[i] &= breast_net.bits[i];

    result.breast_mask = prep::resample_mask(breast_net, ow, oh);
    result.dense_mask = prep::resample_mask(dense_net, ow, oh);
    result.breast_area_px = result.breast_mask.area();
    result.dense_area_px = result.dense_mask.area();
    result.pd_percent = percent_density(result.breast_mask, result.dense_mask);
    return result;
}

PDResult infer(const CascadeModel& model, const Image& raw, double tag_threshold) {
    model.validate();
    auto make_stage = [](const nn::UNetConfig& cfg, const nn::ModelWeights& w) {
        return [&cfg, &w](const nn::Tensor& x) { return nn::unet_forward(cfg, w, x); };
    };
    return infer_with_predictors(model.breast_config.input_size,
                                 make_stage(model.breast_config, model.breast),
                                 make_stage(model.dense_config, model.dense), model.threshold, raw,
                                 tag_threshold);
}

// ---------------------------------------------------------------------------

struct LocalTrainer::Impl {
    nn::UNetConfig config;
    CascadeHyper hyper;
    std::uint64_t seed = 0;
    std::uint64_t total_images = 0;

    nn::UNet<float> breast_net{nn::UNetConfig{}};
    nn::UNet<float> dense_net{nn::UNetConfig{}};
    nn::AdamState<float> breast_opt;
    nn::AdamState<float> dense_opt;

    std::vector<nn::TrainPair<float>> breast_train, breast_val;
    std::vector<nn::TrainPair<float>> dense_train, dense_val;
};

LocalTrainer::LocalTrainer(const std::vector<InstitutionData>& datasets,
                           const nn::UNetConfig& config, const CascadeHyper& hyper,
                           std::uint64_t seed)
    : impl_(std::make_unique<Impl>()) {
    config.validate();
    impl_->config = config;
    impl_->hyper = hyper;
    impl_->seed = seed;
    impl_->breast_net = nn::UNet<float>(config);
    impl_->dense_net = nn::UNet<float>(config);

    for (const InstitutionData& inst : datasets) {
        if (inst.samples.empty()) throw ConfigError("institution " + inst.name + " has no samples");

        // subject-level 4:1 split, stable per (seed, institution name)
        std::vector<std::string> subjects;
        for (const phantom::PhantomSample& s : inst.samples)
            if (std::find(subjects.begin(), subjects.end(), s.subject_id) == subjects.end())
                subjects.push_back(s.subject_id);
        Rng split_rng = Rng::derive(seed, "split/" + inst.name);
        std::vector<std::string> shuffled = subjects;
        split_rng.shuffle(shuffled);
        std::size_t n_val = 0;
        if (subjects.size() >= 2) {
            n_val = static_cast<std::size_t>(
                std::lround(0.2 * static_cast<double>(subjects.size())));
            n_val = std::clamp<std::size_t>(n_val, 1, subjects.size() - 1);
        }
        std::map<std::string, bool> is_val;
        for (std::size_t i = 0; i < shuffled.size(); ++i)
            is_val[shuffled[i]] = i < n_val;

        Rng noise_rng = Rng::derive(seed, "labelnoise/" + inst.name);
        for (const phantom::PhantomSample& s : inst.samples) {
            BinaryMask breast_label = s.breast_truth;
            BinaryMask dense_label = s.dense_truth;
            if (hyper.label_noise > 0.0 && noise_rng.bernoulli(hyper.label_noise)) {
                const bool dilate = noise_rng.bernoulli(0.5);
                breast_label = morph1(breast_label, dilate);
                dense_label = morph1(dense_label, dilate);
            }
            const Image stage1 = preprocess_input(s.image, config.input_size, hyper.tag_threshold);
            const BinaryMask breast_t =
                prep::resample_mask(breast_label, config.input_size, config.input_size);
            const BinaryMask dense_t =
                prep::resample_mask(dense_label, config.input_size, config.input_size);
            const Image stage2 = prep::apply_breast_mask(stage1, breast_t);

            nn::TrainPair<float> p1{image_to_tensor(stage1), mask_to_tensor(breast_t)};
            nn::TrainPair<float> p2{image_to_tensor(stage2), mask_to_tensor(dense_t)};
            if (is_val[s.subject_id]) {
                impl_->breast_val.push_back(std::move(p1));
                impl_->dense_val.push_back(std::move(p2));
            } else {
                impl_->breast_train.push_back(std::move(p1));
                impl_->dense_train.push_back(std::move(p2));
            }
            ++impl_->total_images;
        }
    }
    if (impl_->breast_train.empty()) throw ConfigError("no training samples after split");

    impl_->breast_opt = nn::AdamState<float>::for_weights(impl_->breast_net.weights(),
                                                          hyper.learning_rate, hyper.weight_decay);
    impl_->dense_opt = nn::AdamState<float>::for_weights(impl_->dense_net.weights(),
                                                         hyper.learning_rate, hyper.weight_decay);
    init_weights();
}

LocalTrainer::~LocalTrainer() = default;

void LocalTrainer::init_weights() {
    Rng rb = Rng::derive(impl_->seed, "init/breast");
    Rng rd = Rng::derive(impl_->seed, "init/dense");
    impl_->breast_net.init_weights(rb);
    impl_->dense_net.init_weights(rd);
}

void LocalTrainer::set_weights(const nn::ModelWeights& breast, const nn::ModelWeights& dense) {
    impl_->breast_net.set_weights(breast);
    impl_->dense_net.set_weights(dense);
}

std::pair<nn::ModelWeights, nn::ModelWeights> LocalTrainer::weights() const {
    return {impl_->breast_net.weights(), impl_->dense_net.weights()};
}

void LocalTrainer::run_epoch(int epoch_index) {
    nn::TrainHyper th{impl_->hyper.batch_size, impl_->hyper.augment};
    Rng rng_b = Rng::derive(impl_->seed, "epoch/breast/" + std::to_string(epoch_index));
    Rng rng_d = Rng::derive(impl_->seed, "epoch/dense/" + std::to_string(epoch_index));

    // the two stages share no state; one worker thread each
    std::exception_ptr breast_err;
    std::thread breast_worker([&] {
        try {
            nn::train_epoch(impl_->breast_net, impl_->breast_opt, impl_->breast_train, th, rng_b);
        } catch (...) {
            breast_err = std::current_exception();
        }
    });
    nn::train_epoch(impl_->dense_net, impl_->dense_opt, impl_->dense_train, th, rng_d);
    breast_worker.join();
    if (breast_err) std::rethrow_exception(breast_err);
}

std::optional<std::pair<double, double>> LocalTrainer::validation_loss() {
    if (impl_->breast_val.empty()) return std::nullopt;
    const double lb =
        nn::eval_loss(impl_->breast_net, impl_->breast_val, impl_->hyper.batch_size);
    const double ld = nn::eval_loss(impl_->dense_net, impl_->dense_val, impl_->hyper.batch_size);
    return std::make_pair(lb, ld);
}

std::uint64_t LocalTrainer::train_image_count() const { return impl_->breast_train.size(); }
std::uint64_t LocalTrainer::total_image_count() const { return impl_->total_images; }

TrainResult train_cascade(const std::vector<InstitutionData>& datasets,
                          const nn::UNetConfig& config, const CascadeHyper& hyper,
                          std::uint64_t seed) {
    if (hyper.epochs < 0) throw ConfigError("epochs must be >= 0");
    LocalTrainer trainer(datasets, config, hyper, seed);

    auto [best_breast, best_dense] = trainer.weights();
    double best_breast_loss = std::numeric_limits<double>::infinity();
    double best_dense_loss = std::numeric_limits<double>::infinity();
    int best_breast_epoch = 0, best_dense_epoch = 0;

    for (int e = 1; e <= hyper.epochs; ++e) {
        trainer.run_epoch(e);
        if (hyper.select_best) {
            if (auto val = trainer.validation_loss()) {
                auto [lb, ld] = *val;
                if (lb < best_breast_loss) {
                    best_breast_loss = lb;
                    best_breast = trainer.weights().first;
                    best_breast_epoch = e;
                }
                if (ld < best_dense_loss) {
                    best_dense_loss = ld;
                    best_dense = trainer.weights().second;
                    best_dense_epoch = e;
                }
            }
        }
    }

    TrainResult result;
    auto [final_breast, final_dense] = trainer.weights();
    result.final_model =
        CascadeModel{config, config, final_breast, final_dense, 0.5};
    const bool have_best = best_breast_epoch > 0;
    result.model = hyper.select_best && have_best
                       ? CascadeModel{config, config, best_breast, best_dense, 0.5}
                       : result.final_model;
    result.best_breast_epoch = best_breast_epoch;
    result.best_dense_epoch = best_dense_epoch;
    return result;
}

void save_model(const std::string& dir, const CascadeModel& model) {
    model.validate();
    std::filesystem::create_directories(dir);
    nn::write_weights_file(dir + "/breast.mflw", model.breast);
    nn::write_weights_file(dir + "/dense.mflw", model.dense);
    std::ofstream f(dir + "/model.txt", std::ios::trunc);
    if (!f) throw DataError("cannot write " + dir + "/model.txt");
    f << "input_size=" << model.breast_config.input_size << '\n'
      << "levels=" << model.breast_config.levels << '\n'
      << "base_channels=" << model.breast_config.base_channels << '\n'
      << "in_channels=" << model.breast_config.in_channels << '\n'
      << "out_channels=" << model.breast_config.out_channels << '\n';
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.17g", model.threshold);
    f << "threshold=" << buf << '\n';
    if (!f) throw DataError("short write to " + dir + "/model.txt");
}

CascadeModel load_model(const std::string& dir) {
    std::ifstream f(dir + "/model.txt");
    if (!f) throw DataError("cannot open " + dir + "/model.txt");
    CascadeModel model;
    nn::UNetConfig cfg;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw DataError("bad model descriptor line: " + line);
        const std::string key = line.substr(0, eq), value = line.substr(eq + 1);
        if (key == "input_size") cfg.input_size = std::stoi(value);
        else if (key == "levels") cfg.levels = std::stoi(value);
        else if (key == "base_channels") cfg.base_channels = std::stoi(value);
        else if (key == "in_channels") cfg.in_channels = std::stoi(value);
        else if (key == "out_channels") cfg.out_channels = std::stoi(value);
        else if (key == "threshold") model.threshold = std::stod(value);
        else throw DataError("unknown model descriptor key: " + key);
    }
    model.breast_config = cfg;
    model.dense_config = cfg;
    model.breast = nn::read_weights_file(dir + "/breast.mflw");
    model.dense = nn::read_weights_file(dir + "/dense.mflw");
    model.validate();
    return model;
}

}  // namespace mammofl::cascade
