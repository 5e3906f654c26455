#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "ihcc/clusters.hpp"
#include "ihcc/corpus.hpp"
#include "ihcc/image.hpp"

namespace ihcc {

// Grid of thumbnails, one row per entry of rows (record indices), at most
// max_per_row images each, separated by a 2-pixel gutter.
Image montage(const Manifest& manifest, const std::vector<std::vector<std::size_t>>& rows, int thumb_size,
              int max_per_row);

// One row per cluster of one participant.
Image participant_montage(const ClusterAssignment& assignment, const Manifest& manifest,
                          const std::string& participant_id, int thumb_size = 32, int max_per_row = 12);

// One row per participant present in one cluster.
Image cluster_montage(const ClusterAssignment& assignment, const Manifest& manifest, int cluster_id,
                      int thumb_size = 32, int max_per_row = 12);

struct BoxGroup {
    std::string name;
    std::vector<double> values;
};

struct BoxStats {
    double min = 0, q1 = 0, median = 0, q3 = 0, max = 0;
};

// Linear-interpolated quartiles of a nonempty sample.
BoxStats box_stats(std::vector<double> values);

// Box-and-whisker raster, one box per group on a shared axis spanning
// [y_lo, y_hi]. Infinite values are clamped to y_hi. Axis labels are not
// rendered; write_box_csv records the numbers.
Image box_plot(const std::vector<BoxGroup>& groups, double y_lo, double y_hi, int height = 240);

// Columns group, n, min, q1, median, q3, max.
void write_box_csv(const std::filesystem::path& path, const std::vector<BoxGroup>& groups);

} // namespace ihcc
