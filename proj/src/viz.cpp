#include "tmvit/viz.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>

#include "tmvit/errors.hpp"

namespace tmvit {

std::vector<MergeFrame> merge_frames(const ForwardTrace& trace) {
    if (trace.prune_events.empty())
        throw ParameterError("trace has no prune events to render");
    const int cells = trace.patch_grid * trace.patch_grid;

    std::vector<MergeFrame> frames;
    for (const auto& event : trace.prune_events) {
        MergeFrame f;
        f.layer = event.layer;
        f.cell_group.assign(static_cast<std::size_t>(cells), -1);
        for (const auto& group : event.outcome.group_provenance) {
            if (group.empty()) continue;   // the CLS entry carries no patches
            int gid = group.front();       // groups are sorted, front is the minimum
            for (int patch : group) {
                if (patch < 0 || patch >= cells)
                    throw ParameterError("provenance patch id " + std::to_string(patch) +
                                         " outside the " + std::to_string(cells) + "-cell grid");
                f.cell_group[static_cast<std::size_t>(patch)] = gid;
            }
        }
        for (int g : f.cell_group)
            if (g < 0) throw ParameterError("provenance does not cover every patch");
        frames.push_back(std::move(f));
    }
    return frames;
}

std::vector<std::array<unsigned char, 3>> group_palette(int count, std::uint64_t seed) {
    if (count < 1) throw ParameterError("palette needs at least one color");
    int levels = 2;
    while (levels * levels * levels < count) ++levels;

    std::vector<std::array<unsigned char, 3>> lattice;
    lattice.reserve(static_cast<std::size_t>(levels) * levels * levels);
    auto level_value = [levels](int i) {
        return static_cast<unsigned char>(std::lround(255.0 * i / (levels - 1)));
    };
    for (int r = 0; r < levels; ++r)
        for (int g = 0; g < levels; ++g)
            for (int b = 0; b < levels; ++b)
                lattice.push_back({level_value(r), level_value(g), level_value(b)});

    std::mt19937_64 rng(seed);
    std::shuffle(lattice.begin(), lattice.end(), rng);
    lattice.resize(static_cast<std::size_t>(count));
    return lattice;
}

std::vector<std::string> render_merge_trace(const ForwardTrace& trace, const std::string& out_dir,
                                            int cell_px, std::uint64_t palette_seed) {
    if (cell_px < 1) throw ParameterError("cell_px must be positive");
    auto frames = merge_frames(trace);
    const int side = trace.patch_grid;
    auto palette = group_palette(side * side, palette_seed);

    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create " + out_dir + ": " + ec.message());

    std::vector<std::string> written;
    for (const auto& f : frames) {
        RgbImage img;
        img.width = side * cell_px;
        img.height = side * cell_px;
        img.pixels.resize(static_cast<std::size_t>(img.width) * img.height * 3);
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x) {
                int patch = (y / cell_px) * side + (x / cell_px);
                const auto& color = palette[static_cast<std::size_t>(f.cell_group[patch])];
                for (int c = 0; c < 3; ++c) img.at(y, x, c) = color[c];
            }
        char name[32];
        std::snprintf(name, sizeof(name), "merge_layer_%02d.ppm", f.layer);
        fs::path out = fs::path(out_dir) / name;
        write_ppm(img, out.string());
        written.push_back(out.string());
    }
    return written;
}

} // namespace tmvit
