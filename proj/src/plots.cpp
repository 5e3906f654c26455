#include "ihcc/plots.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

namespace ihcc {

namespace {

constexpr int kGutter = 2;

void fill_rect(Image& img, int x0, int y0, int x1, int y1, const float rgb[3]) {
    x0 = std::max(x0, 0);
    y0 = std::max(y0, 0);
    x1 = std::min(x1, img.width);
    y1 = std::min(y1, img.height);
    for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x) {
            for (int c = 0; c < 3; ++c) img.at(y, x, c) = rgb[c];
        }
    }
}

} // namespace

Image montage(const Manifest& manifest, const std::vector<std::vector<std::size_t>>& rows, int thumb_size,
              int max_per_row) {
    if (thumb_size < 1 || max_per_row < 1) throw ConfigError("montage: thumbnail size and row length must be positive");
    if (rows.empty()) throw ConfigError("montage: nothing to draw");
    int cols = 1;
    for (const auto& r : rows) cols = std::max(cols, std::min(static_cast<int>(r.size()), max_per_row));
    const int step = thumb_size + kGutter;
    Image out(static_cast<int>(rows.size()) * step + kGutter, cols * step + kGutter, 1.0f);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        for (int k = 0; k < std::min(static_cast<int>(rows[r].size()), max_per_row); ++k) {
            const auto idx = rows[r][k];
            if (idx >= manifest.size()) throw ConfigError("montage: record index out of range");
            const auto& px = manifest.records[idx].pixels;
            if (px.empty()) throw DataError("montage: pixels of " + manifest.records[idx].image_id + " are not loaded");
            const Image thumb = center_view(px, thumb_size);
            const int oy = kGutter + static_cast<int>(r) * step, ox = kGutter + k * step;
            for (int y = 0; y < thumb_size; ++y) {
                for (int x = 0; x < thumb_size; ++x) {
                    for (int c = 0; c < 3; ++c) out.at(oy + y, ox + x, c) = thumb.at(y, x, c);
                }
            }
        }
    }
    clip_unit(out);
    return out;
}

Image participant_montage(const ClusterAssignment& assignment, const Manifest& manifest,
                          const std::string& participant_id, int thumb_size, int max_per_row) {
    std::vector<std::vector<std::size_t>> rows;
    for (const auto& [cid, members] : participant_subclusters(assignment, participant_id)) rows.push_back(members);
    return montage(manifest, rows, thumb_size, max_per_row);
}

Image cluster_montage(const ClusterAssignment& assignment, const Manifest& manifest, int cluster_id, int thumb_size,
                      int max_per_row) {
    std::map<std::string, std::vector<std::size_t>> by_participant;
    for (std::size_t i = 0; i < assignment.size(); ++i) {
        if (assignment.cluster_ids[i] == cluster_id) by_participant[assignment.participant_ids[i]].push_back(i);
    }
    if (by_participant.empty()) throw ConfigError("cluster_montage: cluster " + std::to_string(cluster_id) + " is empty");
    std::vector<std::vector<std::size_t>> rows;
    for (auto& [pid, members] : by_participant) rows.push_back(std::move(members));
    return montage(manifest, rows, thumb_size, max_per_row);
}

BoxStats box_stats(std::vector<double> values) {
    if (values.empty()) throw ConfigError("box_stats of an empty sample");
    std::sort(values.begin(), values.end());
    auto q = [&](double p) {
        const double pos = p * static_cast<double>(values.size() - 1);
        const auto lo = static_cast<std::size_t>(std::floor(pos));
        const auto hi = std::min(lo + 1, values.size() - 1);
        return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
    };
    return {values.front(), q(0.25), q(0.5), q(0.75), values.back()};
}

Image box_plot(const std::vector<BoxGroup>& groups, double y_lo, double y_hi, int height) {
    if (groups.empty()) throw ConfigError("box_plot: no groups");
    if (!(y_hi > y_lo)) throw ConfigError("box_plot: empty axis range");
    if (height < 40) throw ConfigError("box_plot: height must be at least 40");
    const int margin = 10, box_w = 40, slot = 70;
    Image img(height, margin * 2 + slot * static_cast<int>(groups.size()), 1.0f);
    const float grid[3] = {0.88f, 0.88f, 0.88f}, ink[3] = {0.1f, 0.1f, 0.1f}, body[3] = {0.55f, 0.7f, 0.9f};
    const int plot_h = height - 2 * margin;
    auto to_y = [&](double v) {
        if (!std::isfinite(v)) v = v > 0 ? y_hi : y_lo;
        v = std::clamp(v, y_lo, y_hi);
        return margin + static_cast<int>(std::lround((1.0 - (v - y_lo) / (y_hi - y_lo)) * (plot_h - 1)));
    };
    for (int g = 0; g <= 4; ++g) {
        const int y = to_y(y_lo + (y_hi - y_lo) * g / 4.0);
        fill_rect(img, margin, y, img.width - margin, y + 1, grid);
    }
    for (std::size_t g = 0; g < groups.size(); ++g) {
        if (groups[g].values.empty()) continue;
        const auto s = box_stats(groups[g].values);
        const int x0 = margin + static_cast<int>(g) * slot + (slot - box_w) / 2, cx = x0 + box_w / 2;
        fill_rect(img, cx, to_y(s.max), cx + 1, to_y(s.q3), ink);
        fill_rect(img, cx, to_y(s.q1), cx + 1, to_y(s.min) + 1, ink);
        fill_rect(img, x0 + 10, to_y(s.max), x0 + box_w - 10, to_y(s.max) + 1, ink);
        fill_rect(img, x0 + 10, to_y(s.min), x0 + box_w - 10, to_y(s.min) + 1, ink);
        fill_rect(img, x0, to_y(s.q3), x0 + box_w, to_y(s.q1) + 1, body);
        fill_rect(img, x0, to_y(s.median), x0 + box_w, to_y(s.median) + 2, ink);
    }
    return img;
}

void write_box_csv(const std::filesystem::path& path, const std::vector<BoxGroup>& groups) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream f(path);
    if (!f) throw DataError("cannot write " + path.string());
    f << "group,n,min,q1,median,q3,max\n";
    f.precision(6);
    for (const auto& g : groups) {
        f << g.name << ',' << g.values.size();
        if (g.values.empty()) {
            f << ",,,,,\n";
            continue;
        }
        const auto s = box_stats(g.values);
        f << ',' << s.min << ',' << s.q1 << ',' << s.median << ',' << s.q3 << ',' << s.max << '\n';
    }
}

} // namespace ihcc
