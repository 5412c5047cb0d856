#include "tsqa/expansion.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace tsqa::expansion {

namespace {

void bresenham(Tensor& img, int c0, int r0, int c1, int r1) {
    const int dc = std::abs(c1 - c0);
    const int dr = -std::abs(r1 - r0);
    const int sc = c0 < c1 ? 1 : -1;
    const int sr = r0 < r1 ? 1 : -1;
    int err = dc + dr;
    int c = c0, r = r0;
    while (true) {
        img.at(r, c) = 1.0;
        if (c == c1 && r == r1) break;
        const int e2 = 2 * err;
        if (e2 >= dr) {
            err += dr;
            c += sc;
        }
        if (e2 <= dc) {
            err += dc;
            r += sr;
        }
    }
}

std::vector<double> padded_values(const NormalizedSeries& ns, int patch_len) {
    if (ns.values.empty()) throw std::invalid_argument("expansion: empty series");
    if (patch_len < 1) throw std::invalid_argument("expansion: patch length must be >= 1");
    std::vector<double> v = ns.values;
    while (v.size() % patch_len != 0) v.push_back(v.back());
    return v;
}

}  // namespace

NormalizedSeries normalize(const std::vector<double>& series) {
    if (series.empty()) throw std::invalid_argument("normalize: empty series");
    for (double v : series)
        if (!std::isfinite(v))
            throw std::invalid_argument("normalize: series contains a non-finite value");

    NormalizedSeries ns;
    ns.stats.length = static_cast<int>(series.size());
    ns.stats.first = series.front();
    ns.stats.last = series.back();
    ns.stats.max = series[0];
    ns.stats.min = series[0];
    double mean = 0.0;
    for (double v : series) {
        mean += v;
        ns.stats.max = std::max(ns.stats.max, v);
        ns.stats.min = std::min(ns.stats.min, v);
    }
    mean /= static_cast<double>(series.size());
    double var = 0.0;
    for (double v : series) var += (v - mean) * (v - mean);
    const double std_dev = std::sqrt(var / static_cast<double>(series.size()));

    ns.offset = -mean;
    ns.scaling = std_dev > 1e-6 ? 1.0 / std_dev : 1.0;
    ns.values.reserve(series.size());
    for (double v : series) ns.values.push_back((v - mean) * ns.scaling);
    return ns;
}

std::vector<double> denormalize(const NormalizedSeries& ns) {
    std::vector<double> out;
    out.reserve(ns.values.size());
    for (double v : ns.values) out.push_back(v / ns.scaling - ns.offset);
    return out;
}

std::string stats_prompt(const NormalizedSeries& ns) {
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "[offset=%.3f|scaling=%.3f|length=%d|max=%.3f|min=%.3f|left=%.3f|right=%.3f]",
                  ns.offset, ns.scaling, ns.stats.length, ns.stats.max, ns.stats.min,
                  ns.stats.first, ns.stats.last);
    return buf;
}

Tensor patchify(const NormalizedSeries& ns, int patch_len) {
    const std::vector<double> v = padded_values(ns, patch_len);
    const int count = static_cast<int>(v.size()) / patch_len;
    Tensor patches(count, patch_len);
    for (int j = 0; j < count; ++j)
        for (int k = 0; k < patch_len; ++k)
            patches.at(j, k) = v[static_cast<size_t>(j) * patch_len + k];
    return patches;
}

Tensor rasterize(const NormalizedSeries& ns, int numeric_patch_len, int pixel_size) {
    if (pixel_size < 4) throw std::invalid_argument("rasterize: pixel size must be >= 4");
    const std::vector<double> v = padded_values(ns, numeric_patch_len);
    const int T = static_cast<int>(v.size());
    const int count = T / numeric_patch_len;
    const int width = count * pixel_size;
    Tensor img(pixel_size, width);

    double lo = v[0], hi = v[0];
    for (double x : v) {
        lo = std::min(lo, x);
        hi = std::max(hi, x);
    }

    auto col_of = [&](int t) {
        return T > 1 ? static_cast<int>((static_cast<long long>(t) * (width - 1)) / (T - 1)) : 0;
    };
    auto row_of = [&](double x) {
        if (hi == lo) return (pixel_size - 1) / 2;
        return static_cast<int>(std::llround((pixel_size - 1) * (hi - x) / (hi - lo)));
    };

    int pc = col_of(0), pr = row_of(v[0]);
    img.at(pr, pc) = 1.0;
    for (int t = 1; t < T; ++t) {
        const int c = col_of(t), r = row_of(v[t]);
        bresenham(img, pc, pr, c, r);
        pc = c;
        pr = r;
    }
    return img;
}

std::string caption_patch(const std::vector<double>& numeric_patch, int start_index) {
    if (numeric_patch.empty()) throw std::invalid_argument("caption_patch: empty patch");
    double mx = numeric_patch[0], mn = numeric_patch[0], mean = 0.0;
    for (double v : numeric_patch) {
        mx = std::max(mx, v);
        mn = std::min(mn, v);
        mean += v;
    }
    mean /= static_cast<double>(numeric_patch.size());
    double var = 0.0;
    for (double v : numeric_patch) var += (v - mean) * (v - mean);
    const double sd = std::sqrt(var / static_cast<double>(numeric_patch.size()));

    char buf[160];
    std::snprintf(buf, sizeof(buf), "t=%d..%d max=%.3f min=%.3f mean=%.3f std=%.3f",
                  start_index, start_index + static_cast<int>(numeric_patch.size()) - 1, mx, mn,
                  mean, sd);
    return buf;
}

PatchBundle expand(const NormalizedSeries& ns, int numeric_patch_len, int pixel_size) {
    if (pixel_size < numeric_patch_len)
        throw std::invalid_argument(
            "expand: pixel size must be >= numeric patch length so pixel patch j "
            "covers exactly numeric patch j's time span");
    PatchBundle pb;
    pb.numeric_patch_len = numeric_patch_len;
    pb.pixel_size = pixel_size;
    pb.numeric_patches = patchify(ns, numeric_patch_len);
    pb.patch_count = pb.numeric_patches.rows;
    pb.image = rasterize(ns, numeric_patch_len, pixel_size);

    for (int j = 0; j < pb.patch_count; ++j) {
        Tensor tile(pixel_size, pixel_size);
        for (int r = 0; r < pixel_size; ++r)
            for (int c = 0; c < pixel_size; ++c)
                tile.at(r, c) = pb.image.at(r, j * pixel_size + c);
        pb.pixel_patches.push_back(std::move(tile));

        std::vector<double> patch(pb.numeric_patches.row_ptr(j),
                                  pb.numeric_patches.row_ptr(j) + numeric_patch_len);
        pb.captions.push_back(caption_patch(patch, j * numeric_patch_len));
    }
    return pb;
}

std::string to_pgm(const Tensor& image) {
    std::string out = "P2\n" + std::to_string(image.cols) + " " + std::to_string(image.rows) +
                      "\n1\n";
    for (int r = 0; r < image.rows; ++r) {
        for (int c = 0; c < image.cols; ++c) {
            out += image.at(r, c) > 0.5 ? '1' : '0';
            out += c + 1 == image.cols ? '\n' : ' ';
        }
    }
    return out;
}

}  // namespace tsqa::expansion
