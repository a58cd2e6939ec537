#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <vector>

#include "image.hpp"
#include "parallel.hpp"
#include "rng.hpp"

namespace pcst {

struct CraftParams {
    int patch_size = 19;  ///< n
    int search_box = 65;  ///< B, odd
    int knn = 1;          ///< K
    std::uint64_t seed = 0;
    unsigned workers = 0; ///< 0 = default_workers()

    void validate() const {
        if (patch_size < 1) throw std::invalid_argument("CraftParams: patch size must be >= 1");
        if (search_box < 1 || search_box % 2 == 0)
            throw std::invalid_argument("CraftParams: search box must be odd and >= 1");
        if (knn < 1) throw std::invalid_argument("CraftParams: knn must be >= 1");
    }
};

/// Patch size for flat-kernel correlated Gaussian noise, tabulated for
/// sigma in {5, 10, 15, 20} and kernel size k in {2, 3, 4}. Other values
/// snap to the nearest tabulated entry.
inline int default_patch_size(double sigma, int k) {
    static constexpr int table[3][4] = {{19, 27, 31, 33}, {19, 37, 41, 43}, {25, 43, 43, 45}};
    const int row = std::clamp(k, 2, 4) - 2;
    const int col = std::clamp(static_cast<int>(std::lround(sigma / 5.0)), 1, 4) - 1;
    return table[row][col];
}

/// Patch size for real sensor noise keyed by ISO (1600 ... 25600).
inline int default_patch_size_iso(int iso) {
    static const std::map<int, int> table = {{1600, 15}, {3200, 25}, {6400, 27}, {12800, 35}, {25600, 37}};
    auto it = table.lower_bound(iso);
    if (it == table.end()) return std::prev(it)->second;
    return it->second;
}

/// One tiling of the mirror-padded plane into non-overlapping n x n patches.
///
/// Tiling (k, l) places its first patch k rows above and l columns left of
/// the image origin. Patch origins are given in padded coordinates, where
/// image pixel (y, x) sits at (y + k, x + l).
struct OffsetGrid {
    int row_offset = 0;
    int col_offset = 0;
    int patch_size = 1;
    int image_height = 0;
    int image_width = 0;
    Padding pad;
    int patch_rows = 0;
    int patch_cols = 0;
    std::vector<Coord> patch_origins;

    int padded_height() const noexcept { return image_height + pad.top + pad.bottom; }
    int padded_width() const noexcept { return image_width + pad.left + pad.right; }
};

inline OffsetGrid offset_grid(int height, int width, int n, int k, int l) {
    if (n < 1) throw std::invalid_argument("offset_grid: n must be >= 1");
    if (k < 0 || k >= n || l < 0 || l >= n) throw std::invalid_argument("offset_grid: offset out of range");
    if (n > height || n > width) throw std::invalid_argument("offset_grid: patch larger than image");

    OffsetGrid g;
    g.row_offset = k;
    g.col_offset = l;
    g.patch_size = n;
    g.image_height = height;
    g.image_width = width;
    g.patch_rows = (height + k + n - 1) / n;
    g.patch_cols = (width + l + n - 1) / n;
    g.pad = Padding{k, g.patch_rows * n - height - k, l, g.patch_cols * n - width - l};
    g.patch_origins.reserve(static_cast<std::size_t>(g.patch_rows) * g.patch_cols);
    for (int i = 0; i < g.patch_rows; ++i)
        for (int j = 0; j < g.patch_cols; ++j) g.patch_origins.push_back({i * n, j * n});
    return g;
}

/// All n^2 tilings, ordered row-major by offset.
inline std::vector<OffsetGrid> offset_grids(int height, int width, int n) {
    std::vector<OffsetGrid> grids;
    grids.reserve(static_cast<std::size_t>(n) * n);
    for (int k = 0; k < n; ++k)
        for (int l = 0; l < n; ++l) grids.push_back(offset_grid(height, width, n, k, l));
    return grids;
}

/// Square n x n window of an image at a top-left position.
struct PatchView {
    const Image* image = nullptr;
    Coord origin;
    int size = 0;
};

/// Sum of squared differences over all channels and pixels, accumulated in
/// double in (channel, row, column) order.
inline double patch_distance(const PatchView& a, const PatchView& b) {
    if (a.size != b.size || a.image->channels() != b.image->channels())
        throw std::invalid_argument("patch_distance: shape mismatch");
    double acc = 0.0;
    for (int c = 0; c < a.image->channels(); ++c)
        for (int r = 0; r < a.size; ++r) {
            const float* pa = a.image->row(c, a.origin.row + r) + a.origin.col;
            const float* pb = b.image->row(c, b.origin.row + r) + b.origin.col;
            for (int q = 0; q < a.size; ++q) {
                const double d = static_cast<double>(pa[q]) - static_cast<double>(pb[q]);
                acc += d * d;
            }
        }
    return acc;
}

struct Match {
    std::size_t frame_index = 0; ///< burst frame index, never the input frame
    Coord position;              ///< padded coordinates
    double distance = 0.0;

    friend bool operator==(const Match&, const Match&) = default;
};

/// Burst frames mirror-padded for one offset grid.
struct PaddedBurst {
    std::vector<Image> frames;
    std::size_t input_index = 0;
    OffsetGrid grid;

    const Image& input() const { return frames[input_index]; }
};

inline PaddedBurst pad_burst(const Burst& burst, const OffsetGrid& grid) {
    burst.validate();
    const Image& ref = burst.input();
    if (ref.height() != grid.image_height || ref.width() != grid.image_width)
        throw std::invalid_argument("pad_burst: grid does not match burst dimensions");
    PaddedBurst out;
    out.input_index = burst.input_index;
    out.grid = grid;
    out.frames.reserve(burst.size());
    for (const auto& f : burst.frames) out.frames.push_back(mirror_pad(f, grid.pad));
    return out;
}

/// Number of candidate positions examined for a patch at `origin`.
inline std::size_t candidate_count(const PaddedBurst& burst, Coord origin, const CraftParams& params) {
    const int n = burst.grid.patch_size;
    const int half = params.search_box / 2;
    const int rows = std::min(origin.row + half, burst.grid.padded_height() - n) - std::max(origin.row - half, 0) + 1;
    const int cols = std::min(origin.col + half, burst.grid.padded_width() - n) - std::max(origin.col - half, 0) + 1;
    return static_cast<std::size_t>(std::max(rows, 0)) * std::max(cols, 0) * (burst.frames.size() - 1);
}

/// Exhaustive K-nearest-neighbour search for the input patch at `origin`.
///
/// Every frame except the input is scanned over the B x B box centred on
/// `origin`, intersected with the padded frame. Results are sorted by
/// distance; equal distances keep scan order (frame, row, column).
inline std::vector<Match> nearest_neighbors(const PaddedBurst& burst, Coord origin, const CraftParams& params) {
    const int n = burst.grid.patch_size;
    const int half = params.search_box / 2;
    const int row_lo = std::max(origin.row - half, 0);
    const int row_hi = std::min(origin.row + half, burst.grid.padded_height() - n);
    const int col_lo = std::max(origin.col - half, 0);
    const int col_hi = std::min(origin.col + half, burst.grid.padded_width() - n);
    const std::size_t k = static_cast<std::size_t>(params.knn);

    std::vector<Match> best;
    best.reserve(k + 1);
    if (row_lo > row_hi || col_lo > col_hi) return best;

    const Image& input = burst.input();
    const int channels = input.channels();
    const int span = col_hi - col_lo + 1;
    std::vector<double> acc(static_cast<std::size_t>(span));

    for (std::size_t f = 0; f < burst.frames.size(); ++f) {
        if (f == burst.input_index) continue;
        const Image& frame = burst.frames[f];
        for (int r = row_lo; r <= row_hi; ++r) {
            // One accumulator per candidate column; each keeps the same
            // (channel, row, column) summation order as patch_distance.
            std::fill(acc.begin(), acc.end(), 0.0);
            double* out = acc.data();
            for (int c = 0; c < channels; ++c)
                for (int pr = 0; pr < n; ++pr) {
                    const float* a_row = input.row(c, origin.row + pr) + origin.col;
                    const float* b_row = frame.row(c, r + pr) + col_lo;
                    for (int pc = 0; pc < n; ++pc) {
                        const double a = a_row[pc];
                        const float* b = b_row + pc;
                        for (int j = 0; j < span; ++j) {
                            const double d = a - static_cast<double>(b[j]);
                            out[j] += d * d;
                        }
                    }
                }
            for (int j = 0; j < span; ++j) {
                const double dist = acc[static_cast<std::size_t>(j)];
                if (best.size() == k && !(dist < best.back().distance)) continue;
                auto pos = std::upper_bound(best.begin(), best.end(), dist,
                                            [](double d, const Match& m) { return d < m.distance; });
                best.insert(pos, Match{f, {r, col_lo + j}, dist});
                if (best.size() > k) best.pop_back();
            }
        }
    }
    return best;
}

/// Convenience overload on an unpadded burst: pads for `grid`, then searches.
inline std::vector<Match> nearest_neighbors(const Burst& burst, const OffsetGrid& grid, Coord origin,
                                            const CraftParams& params) {
    params.validate();
    return nearest_neighbors(pad_burst(burst, grid), origin, params);
}

struct PatchChoice {
    Coord origin;           ///< padded coordinates of the input patch
    Match match;            ///< neighbour used for stitching
    std::size_t rank = 0;   ///< position of `match` in the sorted K list
    std::size_t found = 0;  ///< size of the K list
};

struct PatchCraft {
    Image image;
    int row_offset = 0;
    int col_offset = 0;
    std::vector<PatchChoice> patches;
};

/// Stitches a target from neighbours of every patch in `grid`, then crops the
/// padding away. With K > 1 one of the K neighbours is picked uniformly; the
/// picks are drawn from `rng` up front so the output does not depend on
/// thread scheduling.
inline PatchCraft build_patchcraft(const Burst& burst, const OffsetGrid& grid, const CraftParams& params,
                                   Rng& rng) {
    params.validate();
    const PaddedBurst padded = pad_burst(burst, grid);
    const std::size_t count = grid.patch_origins.size();

    std::vector<double> picks(count, 0.0);
    if (params.knn > 1)
        for (double& u : picks) u = rng.uniform();

    const Image& input = padded.input();
    const int n = grid.patch_size;
    Image stitched(input.channels(), input.height(), input.width());
    PatchCraft result;
    result.row_offset = grid.row_offset;
    result.col_offset = grid.col_offset;
    result.patches.resize(count);

    parallel_for(
        count,
        [&](std::size_t p) {
            const Coord origin = grid.patch_origins[p];
            const std::vector<Match> matches = nearest_neighbors(padded, origin, params);
            if (matches.empty()) throw std::logic_error("build_patchcraft: empty search window");
            const std::size_t rank = std::min(static_cast<std::size_t>(picks[p] * static_cast<double>(matches.size())),
                                              matches.size() - 1);
            const Match& m = matches[rank];
            const Image& src = padded.frames[m.frame_index];
            for (int c = 0; c < input.channels(); ++c)
                for (int r = 0; r < n; ++r) {
                    const float* from = src.row(c, m.position.row + r) + m.position.col;
                    std::copy(from, from + n, stitched.row(c, origin.row + r) + origin.col);
                }
            result.patches[p] = PatchChoice{origin, m, rank, matches.size()};
        },
        params.workers);

    result.image = crop(stitched, grid.pad.top, grid.pad.left, grid.image_height, grid.image_width);
    return result;
}

/// Picks one of the n^2 offset grids uniformly and builds its target.
inline PatchCraft sample_target(const Burst& burst, const CraftParams& params, Rng& rng) {
    params.validate();
    burst.validate();
    const int n = params.patch_size;
    const auto choice = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(n) * n));
    const OffsetGrid grid = offset_grid(burst.input().height(), burst.input().width(), n, choice / n, choice % n);
    return build_patchcraft(burst, grid, params, rng);
}

/// Aggregate statistics of one crafted target, for metadata records.
struct CraftSummary {
    std::size_t patches = 0;
    double mean_distance = 0.0;
    double min_distance = 0.0;
    double max_distance = 0.0;
    std::map<std::size_t, std::size_t> frame_usage;
    bool input_excluded = true;
};

inline CraftSummary summarize(const PatchCraft& craft, std::size_t input_index) {
    CraftSummary s;
    s.patches = craft.patches.size();
    if (s.patches == 0) return s;
    s.min_distance = craft.patches.front().match.distance;
    s.max_distance = s.min_distance;
    double total = 0.0;
    for (const auto& p : craft.patches) {
        total += p.match.distance;
        s.min_distance = std::min(s.min_distance, p.match.distance);
        s.max_distance = std::max(s.max_distance, p.match.distance);
        ++s.frame_usage[p.match.frame_index];
        if (p.match.frame_index == input_index) s.input_excluded = false;
    }
    s.mean_distance = total / static_cast<double>(s.patches);
    return s;
}

} // namespace pcst
