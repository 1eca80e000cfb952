// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "snelsd/error.hpp"

// Chunk-boundary heatmaps: every token sits in a color cell interpolated
// linearly from red RGB(220,50,50) at r = 0 to green RGB(50,180,50) at
// r = 1, annotated with r to 2 decimals. Tokens with r strictly above 0.9
// carry a boundary marker. Output is deterministic byte for byte.

namespace snelsd {

struct TokenChunk {
  std::string token;
  double r = 0.0;  // boundary indicator in [0, 1]
};

using ChunkLine = std::vector<TokenChunk>;

struct HeatColor {
  int red = 0, green = 0, blue = 0;
};

// Throws ContractError outside [0, 1].
HeatColor heat_color(double r);

// One terminal line per sentence, 24-bit background colors.
std::string heatmap_ansi(const std::vector<ChunkLine>& lines);

// A single self-contained HTML document with inline styling only.
std::string heatmap_html(const std::vector<ChunkLine>& lines);

}  // namespace snelsd
