#include "mammofl/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace mammofl::prep {

namespace {

// union-find over suprathreshold pixels
struct DisjointSet {
    std::vector<int> parent;
    explicit DisjointSet(std::size_t n) : parent(n) {
        for (std::size_t i = 0; i < n; ++i) parent[i] = static_cast<int>(i);
    }
    int find(int a) {
        while (parent[a] != a) {
            parent[a] = parent[parent[a]];
            a = parent[a];
        }
        return a;
    }
    void unite(int a, int b) {
        a = find(a);
        b = find(b);
        if (a != b) parent[b] = a;
    }
};

}  // namespace

Image remove_metal_tag(const Image& img, double intensity_threshold) {
    if (img.size() == 0) return img;
    const float mn = *std::min_element(img.pixels.begin(), img.pixels.end());
    const float mx = *std::max_element(img.pixels.begin(), img.pixels.end());
    const float cut = static_cast<float>(intensity_threshold) * mx;

    const int W = img.width, H = img.height;
    std::vector<std::uint8_t> bright(img.size(), 0);
    bool any = false;
    for (std::size_t i = 0; i < img.size(); ++i) {
        if (img.pixels[i] > cut) {
            bright[i] = 1;
            any = true;
        }
    }
    if (!any) return img;

    DisjointSet ds(img.size());
    auto idx = [W](int y, int x) { return y * W + x; };
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            if (!bright[static_cast<std::size_t>(idx(y, x))]) continue;
            // unite with already-visited 8-neighbors
            const int dy[4] = {0, -1, -1, -1};
            const int dx[4] = {-1, -1, 0, 1};
            for (int k = 0; k < 4; ++k) {
                const int ny = y + dy[k], nx = x + dx[k];
                if (ny < 0 || nx < 0 || nx >= W) continue;
                if (bright[static_cast<std::size_t>(idx(ny, nx))]) ds.unite(idx(y, x), idx(ny, nx));
            }
        }
    }

    std::vector<std::int64_t> area(img.size(), 0);
    for (std::size_t i = 0; i < img.size(); ++i)
        if (bright[i]) ++area[static_cast<std::size_t>(ds.find(static_cast<int>(i)))];

    int largest = -1;
    std::int64_t best = 0;
    for (std::size_t i = 0; i < img.size(); ++i) {
        if (area[i] > best) {
            best = area[i];
            largest = static_cast<int>(i);
        }
    }

    Image out = img;
    for (std::size_t i = 0; i < img.size(); ++i)
        if (bright[i] && ds.find(static_cast<int>(i)) != largest) out.pixels[i] = mn;
    return out;
}

Image resize(const Image& img, int target_width, int target_height) {
    if (target_width <= 0 || target_height <= 0) throw ConfigError("resize target must be positive");
    if (target_width == img.width && target_height == img.height) return img;

    Image out(target_width, target_height);
    out.original_width = img.original_width;
    out.original_height = img.original_height;

    const double sx = static_cast<double>(img.width) / target_width;
    const double sy = static_cast<double>(img.height) / target_height;
    for (int y = 0; y < target_height; ++y) {
        double fy = (y + 0.5) * sy - 0.5;
        fy = std::clamp(fy, 0.0, static_cast<double>(img.height - 1));
        const int y0 = static_cast<int>(fy);
        const int y1 = std::min(y0 + 1, img.height - 1);
        const double wy = fy - y0;
        for (int x = 0; x < target_width; ++x) {
            double fx = (x + 0.5) * sx - 0.5;
            fx = std::clamp(fx, 0.0, static_cast<double>(img.width - 1));
            const int x0 = static_cast<int>(fx);
            const int x1 = std::min(x0 + 1, img.width - 1);
            const double wx = fx - x0;
            const double v = (1.0 - wy) * ((1.0 - wx) * img.at(y0, x0) + wx * img.at(y0, x1)) +
                             wy * ((1.0 - wx) * img.at(y1, x0) + wx * img.at(y1, x1));
            out.at(y, x) = static_cast<float>(v);
        }
    }
    return out;
}

Image minmax_normalize(const Image& img) {
    Image out = img;
    if (img.size() == 0) return out;
    const float mn = *std::min_element(img.pixels.begin(), img.pixels.end());
    const float mx = *std::max_element(img.pixels.begin(), img.pixels.end());
    if (mx == mn) {
        std::fill(out.pixels.begin(), out.pixels.end(), 0.0f);
        return out;
    }
    const float inv = 1.0f / (mx - mn);
    for (float& v : out.pixels) v = (v - mn) * inv;
    return out;
}

Image apply_breast_mask(const Image& img, const BinaryMask& mask) {
    if (img.width != mask.width || img.height != mask.height)
        throw ConfigError("mask dimensions do not match image");
    Image out = img;
    float mn = std::numeric_limits<float>::infinity();
    float mx = -std::numeric_limits<float>::infinity();
    for (std::size_t i = 0; i < img.size(); ++i) {
        if (mask.bits[i]) {
            mn = std::min(mn, img.pixels[i]);
            mx = std::max(mx, img.pixels[i]);
        }
    }
    if (!(mn <= mx)) {  // empty mask
        std::fill(out.pixels.begin(), out.pixels.end(), 0.0f);
        return out;
    }
    const float inv = mx > mn ? 1.0f / (mx - mn) : 0.0f;
    for (std::size_t i = 0; i < img.size(); ++i)
        out.pixels[i] = mask.bits[i] ? (img.pixels[i] - mn) * inv : 0.0f;
    return out;
}

BinaryMask resample_mask(const BinaryMask& mask, int target_width, int target_height) {
    if (target_width <= 0 || target_height <= 0)
        throw ConfigError("resample target must be positive");
    if (target_width == mask.width && target_height == mask.height) return mask;
    BinaryMask out(target_width, target_height);
    for (int y = 0; y < target_height; ++y) {
        int sy = static_cast<int>((y + 0.5) * mask.height / target_height);
        sy = std::min(sy, mask.height - 1);
        for (int x = 0; x < target_width; ++x) {
            int sx = static_cast<int>((x + 0.5) * mask.width / target_width);
            sx = std::min(sx, mask.width - 1);
            out.at(y, x) = mask.at(sy, sx);
        }
    }
    return out;
}

}  // namespace mammofl::prep
