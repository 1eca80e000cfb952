// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <memory>
#include <string>

namespace snelsd {

// Binary constituency tree. Leaves carry a token (and its resolved
// vocabulary id once a vocabulary is attached); every node may carry an
// integer sentiment label. Internal nodes have exactly two children.
struct ParseTree {
  int label = -1;
  std::string token;
  int token_id = -1;
  std::unique_ptr<ParseTree> left;
  std::unique_ptr<ParseTree> right;

  bool leaf() const { return !left && !right; }

  int leaf_count() const {
    if (leaf()) return 1;
    return (left ? left->leaf_count() : 0) + (right ? right->leaf_count() : 0);
  }
};

}  // namespace snelsd
