#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "tmvit/image_io.hpp"
#include "tmvit/model.hpp"

namespace tmvit {

// One rendered prune event: for every original patch, the id of the group it
// currently belongs to. A group's id is the smallest patch id it contains, so
// ids stay stable while groups only ever grow.
struct MergeFrame {
    int layer = 0;
    std::vector<int> cell_group;   // length = grid side squared
};

std::vector<MergeFrame> merge_frames(const ForwardTrace& trace);

// Deterministic palette of `count` distinct colors: an evenly spaced RGB cube
// lattice, shuffled by `seed`.
std::vector<std::array<unsigned char, 3>> group_palette(int count, std::uint64_t seed);

// Writes one PPM per prune event into out_dir (merge_layer_NN.ppm), each
// patch cell cell_px wide painted with its group color. Returns the paths.
std::vector<std::string> render_merge_trace(const ForwardTrace& trace, const std::string& out_dir,
                                            int cell_px = 16, std::uint64_t palette_seed = 0);

} // namespace tmvit
