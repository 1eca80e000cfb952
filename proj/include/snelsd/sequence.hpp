// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "snelsd/error.hpp"

namespace snelsd {

// Padded token-id matrix with a validity mask, one row per sentence.
// Pad id is 0; mask is 1.0 at valid positions and 0.0 past each length.
struct SequenceBatch {
  int batch = 0;
  int max_len = 0;
  std::vector<int> ids;      // batch x max_len, row-major
  std::vector<double> mask;  // batch x max_len
  std::vector<int> lengths;  // batch

  int id_at(int b, int t) const { return ids[static_cast<std::size_t>(b) * max_len + t]; }
  double mask_at(int b, int t) const {
    return mask[static_cast<std::size_t>(b) * max_len + t];
  }

  static SequenceBatch from_ids(const std::vector<std::vector<int>>& sentences) {
    SequenceBatch out;
    out.batch = static_cast<int>(sentences.size());
    for (const auto& s : sentences) {
      out.max_len = std::max(out.max_len, static_cast<int>(s.size()));
      out.lengths.push_back(static_cast<int>(s.size()));
    }
    out.ids.assign(static_cast<std::size_t>(out.batch) * out.max_len, 0);
    out.mask.assign(static_cast<std::size_t>(out.batch) * out.max_len, 0.0);
    for (int b = 0; b < out.batch; ++b) {
      for (std::size_t t = 0; t < sentences[static_cast<std::size_t>(b)].size(); ++t) {
        out.ids[static_cast<std::size_t>(b) * out.max_len + t] =
            sentences[static_cast<std::size_t>(b)][t];
        out.mask[static_cast<std::size_t>(b) * out.max_len + t] = 1.0;
      }
    }
    return out;
  }
};

}  // namespace snelsd
