#include "mammofl/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "mammofl/pgm.hpp"

namespace mammofl::phantom {

namespace {

namespace fs = std::filesystem;

struct Blob {
    double cx, cy, sigma;
};

struct SubjectGeometry {
    double semi_x, semi_y, center_y;
    double wedge_w = 0.0, wedge_h = 0.0;
    std::vector<Blob> blobs;
};

double uniform_in(Rng& rng, const Range& r) { return rng.uniform(r.lo, r.hi); }

/// Normalized ellipse radius for the half-ellipse anchored to the left edge.
double ellipse_r(double x, double y, double cy, double a, double b) {
    const double dx = x / a;
    const double dy = (y - cy) / b;
    return std::sqrt(dx * dx + dy * dy);
}

SubjectGeometry draw_subject(const InstitutionProfile& p, Rng& rng) {
    SubjectGeometry g;
    const double S = p.image_size;
    g.semi_x = uniform_in(rng, p.breast_semi_x) * S;
    g.semi_y = uniform_in(rng, p.breast_semi_y) * S;
    g.center_y = rng.uniform(0.44, 0.56) * S;
    if (p.view_style == ViewStyle::MLO) {
        g.wedge_w = rng.uniform(0.22, 0.38) * S;
        g.wedge_h = rng.uniform(0.35, 0.55) * S;
    }
    const int count = p.dense_blob_count.lo +
                      static_cast<int>(rng.below(
                          static_cast<std::uint64_t>(p.dense_blob_count.hi - p.dense_blob_count.lo + 1)));
    double px = 0.0, py = 0.0;
    for (int i = 0; i < count; ++i) {
        Blob b;
        b.sigma = uniform_in(rng, p.blob_sigma);
        if (i == 0) {
            // seed the chain well inside the breast
            for (int attempt = 0; attempt < 64; ++attempt) {
                b.cx = rng.uniform(0.05, 0.95) * g.semi_x;
                b.cy = g.center_y + rng.uniform(-0.9, 0.9) * g.semi_y;
                if (ellipse_r(b.cx, b.cy, g.center_y, g.semi_x, g.semi_y) <= 0.55) break;
            }
        } else {
            // chain the next blob close enough that the union stays connected
            for (int attempt = 0; attempt < 64; ++attempt) {
                const double ang = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
                const double d = rng.uniform(1.0, 1.5) * b.sigma;
                b.cx = px + d * std::cos(ang);
                b.cy = py + d * std::sin(ang);
                if (ellipse_r(b.cx, b.cy, g.center_y, g.semi_x, g.semi_y) <= 0.80) break;
                if (attempt == 63) {
                    b.cx = px;
                    b.cy = py;
                }
            }
        }
        px = b.cx;
        py = b.cy;
        g.blobs.push_back(b);
    }
    return g;
}

PhantomSample render(const InstitutionProfile& p, const SubjectGeometry& subj,
                     const std::string& subject_id, Rng& rng) {
    const int S = p.image_size;
    const double gain = p.intensity_gain;

    // per-image jitter on the subject geometry
    std::vector<Blob> blobs = subj.blobs;
    for (Blob& b : blobs) {
        b.cx += rng.normal(0.0, 0.8);
        b.cy += rng.normal(0.0, 0.8);
        b.sigma *= rng.uniform(0.92, 1.08);
    }
    const bool with_tag = rng.bernoulli(p.tag_probability);

    PhantomSample s;
    s.subject_id = subject_id;
    s.image = Image(S, S);
    s.breast_truth = BinaryMask(S, S);
    s.dense_truth = BinaryMask(S, S);

    const double rim_inner = 0.93;  // skin band spans this..1.0 of the ellipse radius
    for (int y = 0; y < S; ++y) {
        for (int x = 0; x < S; ++x) {
            const double fx = x + 0.5, fy = y + 0.5;
            const double r = ellipse_r(fx, fy, subj.center_y, subj.semi_x, subj.semi_y);
            const bool in_ellipse = r <= 1.0;
            const bool in_wedge = p.view_style == ViewStyle::MLO &&
                                  fx / subj.wedge_w + fy / subj.wedge_h <= 1.0;
            const bool in_rim = p.rim_level > 0.0 && in_ellipse && r >= rim_inner;

            double v = p.background_level;
            bool breast = false, dense = false;
            if (in_ellipse) {
                double esum = 0.0;
                for (const Blob& b : blobs) {
                    const double dx = fx - b.cx, dy = fy - b.cy;
                    esum += std::exp(-(dx * dx + dy * dy) / (2.0 * b.sigma * b.sigma));
                }
                const double blend = std::min(1.0, esum);
                v = gain * (p.fatty_level + (p.dense_level - p.fatty_level) * blend);
                breast = true;
                dense = esum >= 0.5;
                if (in_rim) {
                    v = gain * p.rim_level;  // skin line paints over tissue
                    dense = false;
                }
            }
            if (in_wedge) {
                v = gain * p.wedge_level;  // pectoral muscle occludes
                breast = false;
                dense = false;
            }
            s.image.at(y, x) = static_cast<float>(v);
            s.breast_truth.at(y, x) = breast ? 1 : 0;
            s.dense_truth.at(y, x) = dense ? 1 : 0;
        }
    }

    if (with_tag) {
        // small bright rectangle in the top-right background corner
        for (int y = 2; y < 5; ++y)
            for (int x = S - 6; x < S - 3; ++x)
                s.image.at(y, x) = static_cast<float>(gain * p.tag_level);
    }

    for (float& v : s.image.pixels) {
        v += static_cast<float>(rng.normal(0.0, p.noise_sigma));
        v = std::clamp(v, 0.0f, 1.0f);
    }

    const std::int64_t breast_area = s.breast_truth.area();
    const std::int64_t dense_area = s.dense_truth.area();
    s.pd_truth = breast_area > 0
                     ? 100.0 * static_cast<double>(dense_area) / static_cast<double>(breast_area)
                     : 0.0;
    return s;
}

}  // namespace

void InstitutionProfile::validate() const {
    if (name.empty()) throw ConfigError("institution name must not be empty");
    if (n_subjects < 1) throw ConfigError("institution " + name + " has no subjects");
    if (images_per_subject < 1) throw ConfigError("images_per_subject must be >= 1");
    if (image_size < 16) throw ConfigError("image_size must be >= 16");
    if (breast_semi_x.lo > breast_semi_x.hi || breast_semi_y.lo > breast_semi_y.hi ||
        blob_sigma.lo > blob_sigma.hi || dense_blob_count.lo > dense_blob_count.hi)
        throw ConfigError("empty range in institution profile " + name);
    if (dense_blob_count.lo < 0) throw ConfigError("dense blob count must be >= 0");
    if (blob_sigma.lo <= 0.0) throw ConfigError("blob sigma must be positive");
    if (tag_probability < 0.0 || tag_probability > 1.0)
        throw ConfigError("tag_probability must be in [0,1]");
    if (noise_sigma < 0.0) throw ConfigError("noise_sigma must be >= 0");
    if (intensity_gain <= 0.0) throw ConfigError("intensity_gain must be positive");
}

std::vector<PhantomSample> generate_dataset(const InstitutionProfile& profile, std::uint64_t seed) {
    profile.validate();
    std::vector<PhantomSample> samples;
    samples.reserve(static_cast<std::size_t>(profile.n_subjects) * profile.images_per_subject);
    for (int k = 0; k < profile.n_subjects; ++k) {
        char sid[32];
        std::snprintf(sid, sizeof sid, "s%03d", k);
        const std::string subject_id = profile.name + "_" + sid;
        Rng subj_rng = Rng::derive(seed, profile.name + "/subject/" + std::to_string(k));
        const SubjectGeometry geom = draw_subject(profile, subj_rng);
        for (int j = 0; j < profile.images_per_subject; ++j) {
            Rng img_rng = Rng::derive(
                seed, profile.name + "/subject/" + std::to_string(k) + "/image/" + std::to_string(j));
            samples.push_back(render(profile, geom, subject_id, img_rng));
        }
    }
    return samples;
}

void write_dataset(const std::string& dir, const std::vector<PhantomSample>& samples) {
    fs::create_directories(dir);
    std::ofstream manifest(dir + "/manifest.txt", std::ios::trunc);
    if (!manifest) throw DataError("cannot write manifest in " + dir);
    std::string prev_subject;
    int idx = 0;
    for (const PhantomSample& s : samples) {
        if (s.subject_id != prev_subject) {
            prev_subject = s.subject_id;
            idx = 0;
            fs::create_directories(dir + "/" + s.subject_id);
        }
        const std::string stem = s.subject_id + "/" + std::to_string(idx);
        write_pgm_file(dir + "/" + stem + ".pgm", s.image, 65535);
        write_mask_pgm_file(dir + "/" + stem + "_breast.pgm", s.breast_truth);
        write_mask_pgm_file(dir + "/" + stem + "_dense.pgm", s.dense_truth);
        char pd[40];
        std::snprintf(pd, sizeof pd, "%.17g", s.pd_truth);
        manifest << s.subject_id << ' ' << stem << ".pgm " << stem << "_breast.pgm " << stem
                 << "_dense.pgm " << pd << '\n';
        ++idx;
    }
    if (!manifest) throw DataError("short write to manifest in " + dir);
}

std::vector<PhantomSample> read_dataset(const std::string& dir) {
    std::ifstream manifest(dir + "/manifest.txt");
    if (!manifest) throw DataError("cannot open manifest in " + dir);
    std::vector<PhantomSample> samples;
    std::string line;
    while (std::getline(manifest, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string subject, img_rel, breast_rel, dense_rel;
        double pd = 0.0;
        if (!(ss >> subject >> img_rel >> breast_rel >> dense_rel >> pd))
            throw DataError("malformed manifest line in " + dir + ": " + line);
        PhantomSample s;
        s.subject_id = subject;
        s.image = read_pgm_file(dir + "/" + img_rel);
        s.breast_truth = read_mask_pgm_file(dir + "/" + breast_rel);
        s.dense_truth = read_mask_pgm_file(dir + "/" + dense_rel);
        const std::int64_t ba = s.breast_truth.area();
        const double recomputed =
            ba > 0 ? 100.0 * static_cast<double>(s.dense_truth.area()) / static_cast<double>(ba) : 0.0;
        if (recomputed != pd)
            throw DataError("manifest pd does not match masks for " + subject + "/" + img_rel);
        s.pd_truth = pd;
        samples.push_back(std::move(s));
    }
    if (samples.empty()) throw DataError("empty dataset in " + dir);
    return samples;
}

}  // namespace mammofl::phantom
