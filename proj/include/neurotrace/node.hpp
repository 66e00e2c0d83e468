#pragma once

#include <compare>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace neurotrace {

struct ModelConfig;

// Where a scalar activation lives in the forward pass. Order matches the
// computation order inside a block, which NodeId ordering relies on.
enum class Site : std::uint8_t {
    embedding,  // e = r^(0); layer 0
    attn_out,   // a^(i); layers 1..L
    mlp_act,    // h^(i), pre-down-projection; layers 1..L
    mlp_out,    // m^(i); layers 1..L
    residual,   // r^(i); layers 1..L
    logit,      // y; layer L+1
};

std::string_view site_name(Site site);
Site parse_site(std::string_view name);

// Sentinel position for per-unit aggregates summed over the token axis.
inline constexpr int kAllPositions = -1;

struct NodeId {
    Site site = Site::embedding;
    int layer = 0;
    int position = 0;
    int unit = 0;

    // Topological (layer, stage) first, then position and unit. Any node
    // that can influence another sorts before it.
    auto operator<=>(const NodeId& other) const {
        if (auto c = layer <=> other.layer; c != 0) return c;
        if (auto c = site <=> other.site; c != 0) return c;
        if (auto c = position <=> other.position; c != 0) return c;
        return unit <=> other.unit;
    }
    bool operator==(const NodeId&) const = default;
};

// "mlp_act:2:5:17" (site:layer:position:unit); position "*" for kAllPositions.
std::string to_string(const NodeId& node);
NodeId parse_node(std::string_view text);

// Width of the unit axis at a site.
int site_width(const ModelConfig& config, Site site);

// Throws UsageError when the (site, layer) pair or any index is out of range
// for a sequence of `seq_len` tokens.
void validate_node(const ModelConfig& config, int seq_len, const NodeId& node);

// Every node of a site across all of its layers and positions.
std::vector<NodeId> basis_nodes(const ModelConfig& config, int seq_len, Site site);

// Layers a site exists at: {0}, {1..L} or {L+1}.
std::vector<int> site_layers(const ModelConfig& config, Site site);

}  // namespace neurotrace
