#include "bmc/tree.hpp"

#include <bit>
#include <string>

#include "bmc/error.hpp"

namespace bmc {

NodeId::NodeId(int generation, std::uint64_t path) : generation_(generation), path_(path) {
    if (generation < 0 || generation > kMaxDepth)
        throw DepthLimitError("generation " + std::to_string(generation) + " outside [0, " +
                              std::to_string(kMaxDepth) + "]");
    if (path >> generation != 0)
        throw DepthLimitError("path does not fit in " + std::to_string(generation) + " bits");
}

GenerationRange::GenerationRange(int n) : depth(n) {
    // T_n has 2^{n+1} - 1 nodes, so the flat index itself must fit.
    if (n < 0 || n >= kMaxDepth) throw DepthLimitError("tree depth " + std::to_string(n) + " out of range");
}

std::pair<NodeId, NodeId> children(const NodeId& u) {
    if (u.generation() >= kMaxDepth) throw DepthLimitError("children of a node at the depth limit");
    return {NodeId(u.generation() + 1, u.path() << 1), NodeId(u.generation() + 1, (u.path() << 1) | 1u)};
}

std::optional<NodeId> parent(const NodeId& u) {
    if (u.is_root()) return std::nullopt;
    return NodeId(u.generation() - 1, u.path() >> 1);
}

bool is_ancestor(const NodeId& u, const NodeId& v) {
    if (u.generation() > v.generation()) return false;
    return (v.path() >> (v.generation() - u.generation())) == u.path();
}

NodeId common_ancestor(const NodeId& u, const NodeId& v) {
    int g = std::min(u.generation(), v.generation());
    std::uint64_t a = u.path() >> (u.generation() - g);
    std::uint64_t b = v.path() >> (v.generation() - g);
    // Strip the bits below the highest differing bit.
    int drop = a == b ? 0 : std::bit_width(a ^ b);
    return NodeId(g - drop, a >> drop);
}

bool lex_leq(const NodeId& u, const NodeId& v) {
    if (is_ancestor(u, v)) return true;
    if (is_ancestor(v, u)) return false;
    NodeId w = common_ancestor(u, v);
    // The branch taken right below w decides.
    int g = w.generation() + 1;
    std::uint64_t bu = (u.path() >> (u.generation() - g)) & 1u;
    return bu == 0;
}

std::uint64_t flat_index(const NodeId& u) { return GenerationRange::offset(u.generation()) + u.path(); }

NodeId node_at(std::uint64_t flat) {
    int g = std::bit_width(flat + 1) - 1;
    return NodeId(g, flat + 1 - (std::uint64_t{1} << g));
}

}  // namespace bmc
