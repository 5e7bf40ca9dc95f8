#pragma once

#include <vector>

#include "mercury/crypto.hpp"

namespace mercury::merkle {

using crypto::Digest;

struct PathStep {
    Digest sibling;
    bool sibling_on_left = false;
};

/// Root of a binary Merkle tree. An odd node at any level is promoted
/// unchanged to the next level. The empty tree has a fixed sentinel root.
Digest root(const std::vector<Digest>& leaves);

/// Authentication path for leaves[index].
std::vector<PathStep> path(const std::vector<Digest>& leaves, std::size_t index);

/// Folds a path upward from the leaf digest.
Digest fold(const Digest& leaf, const std::vector<PathStep>& steps);

Digest empty_root();

}  // namespace mercury::merkle
