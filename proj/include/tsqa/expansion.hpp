#pragma once

#include <string>
#include <vector>

#include "tsqa/tensor.hpp"

namespace tsqa::expansion {

// Zero-centered, unit-scaled copy of a series plus everything needed to get
// back to raw units: original[t] == values[t] / scaling - offset.
struct NormalizedSeries {
    std::vector<double> values;
    double offset = 0.0;   // minus the original mean
    double scaling = 1.0;  // 1/std, or 1 when the variance is degenerate
    struct {
        int length = 0;
        double max = 0.0, min = 0.0, first = 0.0, last = 0.0;
    } stats;  // of the original series
};

// Offset is the negative mean; scaling is the reciprocal population std,
// guarded to 1 when std <= 1e-6. NaN or Inf inputs are rejected.
NormalizedSeries normalize(const std::vector<double>& series);
std::vector<double> denormalize(const NormalizedSeries& ns);

// Exactly "[offset=%.3f|scaling=%.3f|length=%d|max=%.3f|min=%.3f|left=%.3f|right=%.3f]"
// over the original-series statistics. Golden-testable; treat as a format
// contract, not presentation.
std::string stats_prompt(const NormalizedSeries& ns);

// Non-overlapping patches of width patch_len, right-padded with the final
// value; row j = values[j*patch_len .. (j+1)*patch_len).
Tensor patchify(const NormalizedSeries& ns, int patch_len);

// Binary line plot of height pixel_size and width patch_count*pixel_size.
// Min-max of the normalized values maps to rows pixel_size-1 .. 0, each time
// step t of the padded series lands in column t*(width-1)/(T-1) (integer
// floor), and consecutive points are joined with Bresenham segments. A
// degenerate vertical range draws the center row.
Tensor rasterize(const NormalizedSeries& ns, int numeric_patch_len, int pixel_size);

// Exactly "t=%d..%d max=%.3f min=%.3f mean=%.3f std=%.3f" over the patch's
// normalized values; the range is inclusive of both endpoints.
std::string caption_patch(const std::vector<double>& numeric_patch, int start_index);

// The three aligned per-patch modality expansions plus the full raster.
struct PatchBundle {
    int patch_count = 0;               // shared leading dimension
    Tensor numeric_patches;            // patch_count x p_n
    std::vector<Tensor> pixel_patches; // patch_count squares of p_v x p_v
    std::vector<std::string> captions; // patch_count strings
    Tensor image;                      // p_v x (patch_count * p_v)
    int numeric_patch_len = 0;
    int pixel_size = 0;
};

// patchify + rasterize + captions with the alignment invariants enforced:
// pixel patch j is the column slice of the raster covering numeric patch j.
PatchBundle expand(const NormalizedSeries& ns, int numeric_patch_len, int pixel_size);

// Debug dump in PGM P2 text form (maxval 1).
std::string to_pgm(const Tensor& image);

}  // namespace tsqa::expansion
