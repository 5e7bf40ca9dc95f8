#include "mercury/merkle.hpp"

namespace mercury::merkle {
namespace {

Digest node(const Digest& left, const Digest& right) {
    Encoder enc;
    enc.str("mercury/merkle-node");
    crypto::encode(enc, left);
    crypto::encode(enc, right);
    return crypto::hash(enc);
}

std::vector<Digest> next_level(const std::vector<Digest>& level) {
    std::vector<Digest> up;
    up.reserve((level.size() + 1) / 2);
    for (std::size_t i = 0; i + 1 < level.size(); i += 2) up.push_back(node(level[i], level[i + 1]));
    if (level.size() % 2 == 1) up.push_back(level.back());
    return up;
}

}  // namespace

Digest empty_root() { return crypto::hash(std::string_view("mercury/merkle-empty")); }

Digest root(const std::vector<Digest>& leaves) {
    if (leaves.empty()) return empty_root();
    std::vector<Digest> level = leaves;
    while (level.size() > 1) level = next_level(level);
    return level.front();
}

std::vector<PathStep> path(const std::vector<Digest>& leaves, std::size_t index) {
    if (index >= leaves.size()) throw InvalidArgument("merkle leaf index out of range");
    std::vector<PathStep> steps;
    std::vector<Digest> level = leaves;
    while (level.size() > 1) {
        std::size_t sibling = index ^ 1u;
        if (sibling < level.size()) {
            steps.push_back(PathStep{level[sibling], sibling < index});
        }
        level = next_level(level);
        index /= 2;
    }
    return steps;
}

Digest fold(const Digest& leaf, const std::vector<PathStep>& steps) {
    Digest acc = leaf;
    for (const auto& step : steps) {
        acc = step.sibling_on_left ? node(step.sibling, acc) : node(acc, step.sibling);
    }
    return acc;
}

}  // namespace mercury::merkle
