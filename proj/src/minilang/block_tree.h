#ifndef IPA_SRC_MINILANG_BLOCK_TREE_H_
#define IPA_SRC_MINILANG_BLOCK_TREE_H_

#include <vector>

#include "ipa/minilang.h"

namespace ipa::minilang::internal {

// Nested view of a program's statements. `alt` is the else marker of an if
// or the except header of a try; `alt_body` is its block.
struct BlockItem {
  int stmt = -1;
  std::vector<BlockItem> body;
  int alt = -1;
  std::vector<BlockItem> alt_body;
};

using Block = std::vector<BlockItem>;

// Validates indentation and block structure, throwing SyntaxError.
Block build_block_tree(const Program& program);

}  // namespace ipa::minilang::internal

#endif  // IPA_SRC_MINILANG_BLOCK_TREE_H_
