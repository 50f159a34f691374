#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <utility>

namespace bmc {

/// Maximum supported generation. The path of a node is held in 64 bits.
inline constexpr int kMaxDepth = 63;

/// Address of a vertex of the regular binary tree: generation g and the g
/// child choices from the root, first step in the most significant bit.
class NodeId {
public:
    constexpr NodeId() = default;

    /// Throws DepthLimitError if generation > kMaxDepth or path >= 2^generation.
    NodeId(int generation, std::uint64_t path);

    static constexpr NodeId root() { return {}; }

    constexpr int generation() const { return generation_; }
    constexpr std::uint64_t path() const { return path_; }
    constexpr bool is_root() const { return generation_ == 0; }

    friend constexpr bool operator==(const NodeId&, const NodeId&) = default;

private:
    int generation_ = 0;
    std::uint64_t path_ = 0;
};

/// Node counts and flat offsets of T_n = G_0 ∪ ... ∪ G_n.
struct GenerationRange {
    int depth = 0;

    explicit GenerationRange(int n);

    static std::uint64_t generation_size(int k) { return std::uint64_t{1} << k; }
    /// Heap offset of the first node of generation k.
    static std::uint64_t offset(int k) { return (std::uint64_t{1} << k) - 1; }
    std::uint64_t tree_size() const { return (std::uint64_t{1} << (depth + 1)) - 1; }
};

std::pair<NodeId, NodeId> children(const NodeId& u);
std::optional<NodeId> parent(const NodeId& u);

/// True iff u is an ancestor of v or u == v.
bool is_ancestor(const NodeId& u, const NodeId& v);

/// Most recent common ancestor u ∧ v.
NodeId common_ancestor(const NodeId& u, const NodeId& v);

/// Lexicographic order: u ≼ v, or u lies under w0 and v under w1 for w = u ∧ v.
bool lex_leq(const NodeId& u, const NodeId& v);

/// Heap layout index 2^g - 1 + path.
std::uint64_t flat_index(const NodeId& u);
NodeId node_at(std::uint64_t flat);

}  // namespace bmc
