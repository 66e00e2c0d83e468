#include "neurotrace/node.hpp"

#include <array>
#include <charconv>

#include "neurotrace/error.hpp"
#include "neurotrace/model.hpp"

namespace neurotrace {

namespace {

constexpr std::array<std::string_view, 6> kSiteNames = {"embedding", "attn_out", "mlp_act",
                                                        "mlp_out",   "residual", "logit"};

int parse_int(std::string_view text, std::string_view whole) {
    int value = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || ptr != text.data() + text.size()) {
        throw UsageError("malformed node id '" + std::string(whole) + "'");
    }
    return value;
}

}  // namespace

std::string_view site_name(Site site) { return kSiteNames.at(static_cast<std::size_t>(site)); }

Site parse_site(std::string_view name) {
    for (std::size_t i = 0; i < kSiteNames.size(); ++i) {
        if (kSiteNames[i] == name) return static_cast<Site>(i);
    }
    throw UsageError("unknown site '" + std::string(name) + "'");
}

std::string to_string(const NodeId& node) {
    std::string out(site_name(node.site));
    out += ':' + std::to_string(node.layer) + ':';
    out += node.position == kAllPositions ? std::string("*") : std::to_string(node.position);
    out += ':' + std::to_string(node.unit);
    return out;
}

NodeId parse_node(std::string_view text) {
    std::array<std::string_view, 4> parts;
    std::size_t start = 0;
    for (std::size_t i = 0; i < 4; ++i) {
        const std::size_t end = i == 3 ? text.size() : text.find(':', start);
        if (end == std::string_view::npos) throw UsageError("malformed node id '" + std::string(text) + "'");
        parts[i] = text.substr(start, end - start);
        start = end + 1;
    }
    if (parts[3].find(':') != std::string_view::npos) {
        throw UsageError("malformed node id '" + std::string(text) + "'");
    }
    NodeId node;
    node.site = parse_site(parts[0]);
    node.layer = parse_int(parts[1], text);
    node.position = parts[2] == "*" ? kAllPositions : parse_int(parts[2], text);
    node.unit = parse_int(parts[3], text);
    return node;
}

int site_width(const ModelConfig& config, Site site) {
    switch (site) {
        case Site::mlp_act: return config.d_ffn;
        case Site::logit: return config.vocab_size;
        default: return config.d_model;
    }
}

std::vector<int> site_layers(const ModelConfig& config, Site site) {
    switch (site) {
        case Site::embedding: return {0};
        case Site::logit: return {config.n_layers + 1};
        default: {
            std::vector<int> layers;
            for (int l = 1; l <= config.n_layers; ++l) layers.push_back(l);
            return layers;
        }
    }
}

void validate_node(const ModelConfig& config, int seq_len, const NodeId& node) {
    const auto fail = [&](const char* what) {
        throw UsageError("node " + to_string(node) + ": " + what);
    };
    switch (node.site) {
        case Site::embedding:
            if (node.layer != 0) fail("embedding lives at layer 0");
            break;
        case Site::logit:
            if (node.layer != config.n_layers + 1) fail("logits live at layer L+1");
            break;
        default:
            if (node.layer < 1 || node.layer > config.n_layers) fail("layer out of range");
    }
    if (node.position < 0 || node.position >= seq_len) fail("position out of range");
    if (node.unit < 0 || node.unit >= site_width(config, node.site)) fail("unit out of range");
}

std::vector<NodeId> basis_nodes(const ModelConfig& config, int seq_len, Site site) {
    std::vector<NodeId> nodes;
    const int width = site_width(config, site);
    for (int layer : site_layers(config, site)) {
        for (int pos = 0; pos < seq_len; ++pos) {
            for (int unit = 0; unit < width; ++unit) nodes.push_back({site, layer, pos, unit});
        }
    }
    return nodes;
}

}  // namespace neurotrace
