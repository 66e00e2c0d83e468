#include "neurotrace/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>

#include "neurotrace/error.hpp"
#include "neurotrace/io.hpp"
#include "neurotrace/rng.hpp"

namespace neurotrace {

static_assert(std::endian::native == std::endian::little, "weights IO assumes a little-endian host");

void ModelConfig::validate() const {
    if (n_layers < 1 || d_model < 1 || d_ffn < 1 || n_heads < 1 || d_head < 1 || vocab_size < 1 ||
        max_seq_len < 1) {
        throw UsageError("model config: every count must be >= 1");
    }
    if (d_model != n_heads * d_head) throw UsageError("model config: d_model must equal n_heads * d_head");
    if (!(rms_eps > 0.0) || !std::isfinite(rms_eps)) throw UsageError("model config: rms_eps must be > 0");
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
    j = nlohmann::json{{"n_layers", c.n_layers},       {"d_model", c.d_model},
                       {"d_ffn", c.d_ffn},             {"n_heads", c.n_heads},
                       {"d_head", c.d_head},           {"vocab_size", c.vocab_size},
                       {"max_seq_len", c.max_seq_len}, {"rms_eps", c.rms_eps},
                       {"rmsnorm", c.rmsnorm}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
    c.n_layers = j.at("n_layers").get<int>();
    c.d_model = j.at("d_model").get<int>();
    c.d_ffn = j.at("d_ffn").get<int>();
    c.n_heads = j.at("n_heads").get<int>();
    c.d_head = j.at("d_head").get<int>();
    c.vocab_size = j.at("vocab_size").get<int>();
    c.max_seq_len = j.at("max_seq_len").get<int>();
    c.rms_eps = j.at("rms_eps").get<double>();
    c.rmsnorm = j.value("rmsnorm", true);
}

Weights Weights::zeros(const ModelConfig& config) {
    config.validate();
    const int d = config.d_model, f = config.d_ffn;
    Weights w;
    w.config = config;
    w.tok_embed = Mat::Zero(config.vocab_size, d);
    w.pos_embed = Mat::Zero(config.max_seq_len, d);
    w.layers.resize(config.n_layers);
    for (auto& l : w.layers) {
        l.attn_norm = Vec::Zero(d);
        l.w_query = Mat::Zero(d, d);
        l.w_key = Mat::Zero(d, d);
        l.w_value = Mat::Zero(d, d);
        l.w_out = Mat::Zero(d, d);
        l.mlp_norm = Vec::Zero(d);
        l.w_gate = Mat::Zero(d, f);
        l.w_up = Mat::Zero(d, f);
        l.w_down = Mat::Zero(f, d);
    }
    w.final_norm = Vec::Zero(d);
    w.unembed = Mat::Zero(d, config.vocab_size);
    return w;
}

void Weights::validate() const {
    config.validate();
    const Weights expected = zeros(config);
    if (static_cast<int>(layers.size()) != config.n_layers) throw UsageError("weights: layer count mismatch");
    std::vector<std::pair<Eigen::Index, Eigen::Index>> shapes;
    expected.for_each_tensor([&](const std::string&, const double*, Eigen::Index r, Eigen::Index c) {
        shapes.emplace_back(r, c);
    });
    std::size_t i = 0;
    for_each_tensor([&](const std::string& name, const double* data, Eigen::Index r, Eigen::Index c) {
        if (shapes[i] != std::make_pair(r, c)) throw UsageError("weights: bad shape for " + name);
        for (Eigen::Index k = 0; k < r * c; ++k) {
            if (!std::isfinite(data[k])) throw NumericalError("weights: non-finite entry in " + name);
        }
        ++i;
    });
}

bool Weights::operator==(const Weights& other) const {
    if (!(config == other.config) || layers.size() != other.layers.size()) return false;
    std::vector<std::vector<double>> mine;
    for_each_tensor([&](const std::string&, const double* data, Eigen::Index r, Eigen::Index c) {
        mine.emplace_back(data, data + r * c);
    });
    std::size_t i = 0;
    bool equal = true;
    other.for_each_tensor([&](const std::string&, const double* data, Eigen::Index r, Eigen::Index c) {
        if (static_cast<std::size_t>(r * c) != mine[i].size() ||
            std::memcmp(mine[i].data(), data, mine[i].size() * sizeof(double)) != 0) {
            equal = false;
        }
        ++i;
    });
    return equal;
}

Weights init_weights(const ModelConfig& config, std::uint64_t seed) {
    Weights w = Weights::zeros(config);
    auto gen = SeedSplitter(seed).stream("init");
    const auto fill = [&](auto& t, double stddev) {
        std::normal_distribution<double> dist(0.0, stddev);
        for (Eigen::Index r = 0; r < t.rows(); ++r) {
            for (Eigen::Index c = 0; c < t.cols(); ++c) t(r, c) = dist(gen);
        }
    };
    const double d = config.d_model, f = config.d_ffn;
    const double depth = std::sqrt(2.0 * config.n_layers);
    fill(w.tok_embed, 1.0);
    fill(w.pos_embed, 1.0);
    for (auto& l : w.layers) {
        fill(l.w_query, 1.0 / std::sqrt(d));
        fill(l.w_key, 1.0 / std::sqrt(d));
        fill(l.w_value, 1.0 / std::sqrt(d));
        fill(l.w_out, 1.0 / (std::sqrt(d) * depth));
        fill(l.w_gate, 1.0 / std::sqrt(d));
        fill(l.w_up, 1.0 / std::sqrt(d));
        fill(l.w_down, 1.0 / (std::sqrt(f) * depth));
    }
    fill(w.unembed, 1.0 / std::sqrt(d));
    for (auto& l : w.layers) l.attn_norm.setOnes(), l.mlp_norm.setOnes();
    w.final_norm.setOnes();
    return w;
}

void round_to_float32(Weights& weights) {
    weights.for_each_tensor([](const std::string&, double* data, Eigen::Index r, Eigen::Index c) {
        for (Eigen::Index k = 0; k < r * c; ++k) data[k] = static_cast<double>(static_cast<float>(data[k]));
    });
}

void save_weights(const Weights& weights, const std::filesystem::path& path) {
    weights.validate();
    nlohmann::json header;
    header["format"] = "neurotrace-weights-v1";
    header["config"] = weights.config;
    header["tensors"] = nlohmann::json::array();
    std::vector<float> data;
    weights.for_each_tensor([&](const std::string& name, const double* t, Eigen::Index r, Eigen::Index c) {
        nlohmann::json shape = c == 1 && name.find("norm") != std::string::npos ? nlohmann::json{r}
                                                                                : nlohmann::json{r, c};
        header["tensors"].push_back(
            {{"name", name}, {"shape", shape}, {"offset", data.size() * sizeof(float)}});
        for (Eigen::Index k = 0; k < r * c; ++k) data.push_back(static_cast<float>(t[k]));
    });
    const std::string text = header.dump();
    const std::uint64_t length = text.size();

    std::string blob(reinterpret_cast<const char*>(&length), sizeof(length));
    blob += text;
    blob.append(reinterpret_cast<const char*>(data.data()), data.size() * sizeof(float));
    write_file_atomic(path, blob);
}

Weights load_weights(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw UsageError("cannot open weights file " + path.string());
    std::uint64_t length = 0;
    in.read(reinterpret_cast<char*>(&length), sizeof(length));
    if (!in || length == 0 || length > (1u << 26)) throw UsageError("weights file: bad header length");
    std::string text(length, '\0');
    in.read(text.data(), static_cast<std::streamsize>(length));
    if (!in) throw UsageError("weights file: truncated header");

    nlohmann::json header;
    ModelConfig config;
    try {
        header = nlohmann::json::parse(text);
        config = header.at("config").get<ModelConfig>();
    } catch (const nlohmann::json::exception& e) {
        throw UsageError(std::string("weights file: bad header: ") + e.what());
    }
    const std::vector<char> blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    std::map<std::string, nlohmann::json> manifest;
    for (const auto& t : header.at("tensors")) manifest[t.at("name").get<std::string>()] = t;

    Weights w = Weights::zeros(config);
    w.for_each_tensor([&](const std::string& name, double* data, Eigen::Index r, Eigen::Index c) {
        auto it = manifest.find(name);
        if (it == manifest.end()) throw UsageError("weights file: missing tensor " + name);
        std::vector<Eigen::Index> shape = it->second.at("shape").get<std::vector<Eigen::Index>>();
        Eigen::Index count = 1;
        for (auto s : shape) count *= s;
        const bool shape_ok = (shape.size() == 2 && shape[0] == r && shape[1] == c) ||
                              (shape.size() == 1 && c == 1 && shape[0] == r);
        if (!shape_ok || count != r * c) throw UsageError("weights file: shape mismatch for " + name);
        const std::size_t offset = it->second.at("offset").get<std::size_t>();
        if (offset + count * sizeof(float) > blob.size()) throw UsageError("weights file: truncated " + name);
        for (Eigen::Index k = 0; k < count; ++k) {
            float v;
            std::memcpy(&v, blob.data() + offset + k * sizeof(float), sizeof(float));
            data[k] = v;
        }
    });
    w.validate();
    return w;
}

}  // namespace neurotrace
