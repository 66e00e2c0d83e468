#include "neurotrace/tasks.hpp"

#include <algorithm>
#include <sstream>

#include "neurotrace/error.hpp"
#include "neurotrace/io.hpp"
#include "neurotrace/rng.hpp"

namespace neurotrace {

namespace {

constexpr int kBos = 0;
// agreement
constexpr int kThe = 1, kNear = 2, kFirstNoun = 3;
// addition
constexpr int kDigit0 = 1, kPlus = 11, kEquals = 12, kFirstSum = 13, kMaxSum = 198;

int noun_token(int noun, bool plural) { return kFirstNoun + 2 * noun + (plural ? 1 : 0); }
int verb_token(const TaskSpec& s, bool plural) { return kFirstNoun + 2 * s.n_nouns + (plural ? 1 : 0); }
const char* number_name(bool plural) { return plural ? "pl" : "sg"; }

}  // namespace

void to_json(nlohmann::json& j, const Example& e) {
    j = {{"tokens", e.tokens}, {"answer", e.answer}, {"counterfactual_answer", e.counterfactual_answer},
         {"labels", e.labels}};
    if (e.counterfactual) j["counterfactual"] = *e.counterfactual;
}

void from_json(const nlohmann::json& j, Example& e) {
    e = {};
    j.at("tokens").get_to(e.tokens);
    j.at("answer").get_to(e.answer);
    if (j.contains("counterfactual")) e.counterfactual = j.at("counterfactual").get<Tokens>();
    if (j.contains("counterfactual_answer")) j.at("counterfactual_answer").get_to(e.counterfactual_answer);
    if (j.contains("labels")) j.at("labels").get_to(e.labels);
    if (e.counterfactual && e.counterfactual->size() != e.tokens.size()) {
        throw UsageError("example: counterfactual length differs from tokens");
    }
    if (e.counterfactual && e.counterfactual_answer == e.answer) throw UsageError("example: paired answers must differ");
}

void TaskSpec::validate() const {
    if (kind == TaskKind::agreement) {
        if (n_nouns < 1) throw UsageError("task: n_nouns must be >= 1");
        if (n_train < 1 || n_eval < 1) throw UsageError("task: split sizes must be >= 1");
        const long combos = variant == AgreementVariant::simple ? 2L * n_nouns : 4L * n_nouns * n_nouns;
        if (n_train + n_eval > combos) {
            throw UsageError("task: " + std::to_string(n_nouns) + " nouns give only " + std::to_string(combos) +
                             " distinct inputs, fewer than the requested splits");
        }
    } else if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
        throw UsageError("task: train_fraction must be in (0, 1)");
    }
}

int TaskSpec::vocab_size() const {
    return kind == TaskKind::agreement ? kFirstNoun + 2 * n_nouns + 2 : kFirstSum + kMaxSum + 1;
}

int TaskSpec::template_length() const {
    if (kind == TaskKind::addition) return 7;
    return variant == AgreementVariant::simple ? 3 : 6;
}

void to_json(nlohmann::json& j, const TaskSpec& s) {
    j = {{"kind", s.kind == TaskKind::agreement ? "agreement" : "addition"},
         {"variant", s.variant == AgreementVariant::simple ? "simple" : "nounpp"},
         {"n_nouns", s.n_nouns},
         {"n_train", s.n_train},
         {"n_eval", s.n_eval},
         {"train_fraction", s.train_fraction},
         {"seed", s.seed}};
}

void from_json(const nlohmann::json& j, TaskSpec& s) {
    s = {};
    const std::string kind = j.value("kind", "agreement");
    if (kind == "agreement") {
        s.kind = TaskKind::agreement;
    } else if (kind == "addition") {
        s.kind = TaskKind::addition;
    } else {
        throw UsageError("task: unknown kind '" + kind + "'");
    }
    const std::string variant = j.value("variant", "nounpp");
    if (variant != "simple" && variant != "nounpp") throw UsageError("task: unknown variant '" + variant + "'");
    s.variant = variant == "simple" ? AgreementVariant::simple : AgreementVariant::nounpp;
    s.n_nouns = j.value("n_nouns", s.n_nouns);
    s.n_train = j.value("n_train", s.n_train);
    s.n_eval = j.value("n_eval", s.n_eval);
    s.train_fraction = j.value("train_fraction", s.train_fraction);
    s.seed = j.value("seed", s.seed);
    s.validate();
}

TaskSpec task_from_name(const std::string& name) {
    TaskSpec s;
    if (name == "agreement") return s;
    if (name == "agreement_simple") {
        s.variant = AgreementVariant::simple;
        s.n_train = 24;
        s.n_eval = 8;
        return s;
    }
    if (name == "addition") {
        s.kind = TaskKind::addition;
        return s;
    }
    if (std::filesystem::exists(name)) {
        try {
            return nlohmann::json::parse(read_file(name)).get<TaskSpec>();
        } catch (const nlohmann::json::exception& e) {
            throw UsageError("task file " + name + ": " + e.what());
        }
    }
    throw UsageError("unknown task '" + name + "' (expected agreement, agreement_simple, addition or a JSON file)");
}

std::vector<std::string> symbol_table(const TaskSpec& spec) {
    std::vector<std::string> out;
    if (spec.kind == TaskKind::agreement) {
        out = {"<bos>", "the", "near"};
        for (int n = 0; n < spec.n_nouns; ++n) {
            out.push_back("noun" + std::to_string(n));
            out.push_back("noun" + std::to_string(n) + "s");
        }
        out.push_back("is");
        out.push_back("are");
        return out;
    }
    out = {"<bos>"};
    for (int d = 0; d < 10; ++d) out.push_back(std::to_string(d));
    out.push_back("+");
    out.push_back("=");
    for (int s = 0; s <= kMaxSum; ++s) out.push_back("=" + std::to_string(s));
    return out;
}

std::map<std::string, std::string> agreement_labels(const TaskSpec& spec, const Tokens& t) {
    if (static_cast<int>(t.size()) != spec.template_length()) throw UsageError("agreement: wrong template length");
    const int subj = t[2] - kFirstNoun;
    std::map<std::string, std::string> labels = {{"subject_number", number_name(subj % 2 == 1)},
                                                 {"subject_noun", std::to_string(subj / 2)}};
    if (spec.variant == AgreementVariant::nounpp) {
        const int distr = t[5] - kFirstNoun;
        labels["distractor_number"] = number_name(distr % 2 == 1);
        labels["distractor_noun"] = std::to_string(distr / 2);
        labels["attractor"] = (subj % 2) == (distr % 2) ? "match" : "mismatch";
    }
    return labels;
}

std::map<std::string, std::string> addition_labels(const Tokens& t) {
    if (t.size() != 7) throw UsageError("addition: wrong template length");
    const int a = 10 * (t[1] - kDigit0) + (t[2] - kDigit0);
    const int b = 10 * (t[4] - kDigit0) + (t[5] - kDigit0);
    const int sum = a + b;
    std::map<std::string, std::string> labels = {{"a", std::to_string(a)},
                                                 {"b", std::to_string(b)},
                                                 {"sum", std::to_string(sum)},
                                                 {"tens", std::to_string((sum / 10) % 10)}};
    for (int n = 2; n <= 10; ++n) labels["mod" + std::to_string(n)] = std::to_string(sum % n);
    return labels;
}

std::map<std::string, std::string> recompute_labels(const TaskSpec& spec, const Tokens& tokens) {
    return spec.kind == TaskKind::agreement ? agreement_labels(spec, tokens) : addition_labels(tokens);
}

int addition_answer_token(int sum) { return kFirstSum + sum; }

Example flip(const TaskSpec& spec, const Example& e) {
    if (!e.counterfactual) throw UsageError("flip: example is unpaired");
    Example out = e;
    std::swap(out.tokens, *out.counterfactual);
    std::swap(out.answer, out.counterfactual_answer);
    out.labels = recompute_labels(spec, out.tokens);
    return out;
}

Dataset gen_agreement(const TaskSpec& spec) {
    spec.validate();
    if (spec.kind != TaskKind::agreement) throw UsageError("gen_agreement: task is not agreement");
    struct Combo {
        int subj, distr;
        bool subj_pl, distr_pl;
    };
    std::vector<Combo> combos;
    for (int n = 0; n < spec.n_nouns; ++n) {
        for (bool pl : {false, true}) {
            if (spec.variant == AgreementVariant::simple) {
                combos.push_back({n, 0, pl, false});
                continue;
            }
            for (int d = 0; d < spec.n_nouns; ++d) {
                for (bool dpl : {false, true}) combos.push_back({n, d, pl, dpl});
            }
        }
    }
    auto gen = SeedSplitter(spec.seed).stream("data");
    std::shuffle(combos.begin(), combos.end(), gen);

    const auto make = [&](const Combo& c, bool subj_pl) {
        Tokens t = {kBos, kThe, noun_token(c.subj, subj_pl)};
        if (spec.variant == AgreementVariant::nounpp) {
            t.insert(t.end(), {kNear, kThe, noun_token(c.distr, c.distr_pl)});
        }
        return t;
    };
    Dataset d;
    for (int i = 0; i < spec.n_train + spec.n_eval; ++i) {
        const Combo& c = combos[i];
        Example e;
        e.tokens = make(c, c.subj_pl);
        e.counterfactual = make(c, !c.subj_pl);
        e.answer = verb_token(spec, c.subj_pl);
        e.counterfactual_answer = verb_token(spec, !c.subj_pl);
        e.labels = agreement_labels(spec, e.tokens);
        (i < spec.n_train ? d.train : d.eval).push_back(std::move(e));
    }
    return d;
}

Dataset gen_addition(const TaskSpec& spec) {
    spec.validate();
    if (spec.kind != TaskKind::addition) throw UsageError("gen_addition: task is not addition");
    std::vector<std::pair<int, int>> pairs;
    for (int a = 0; a < 100; ++a) {
        for (int b = 0; b < 100; ++b) pairs.emplace_back(a, b);
    }
    auto gen = SeedSplitter(spec.seed).stream("data");
    std::shuffle(pairs.begin(), pairs.end(), gen);
    const auto n_train = static_cast<std::size_t>(std::llround(spec.train_fraction * pairs.size()));
    Dataset d;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const auto [a, b] = pairs[i];
        Example e;
        e.tokens = {kBos, kDigit0 + a / 10, kDigit0 + a % 10, kPlus, kDigit0 + b / 10, kDigit0 + b % 10, kEquals};
        e.answer = addition_answer_token(a + b);
        e.labels = addition_labels(e.tokens);
        (i < n_train ? d.train : d.eval).push_back(std::move(e));
    }
    return d;
}

Dataset generate(const TaskSpec& spec) {
    return spec.kind == TaskKind::agreement ? gen_agreement(spec) : gen_addition(spec);
}

void write_jsonl(const std::filesystem::path& path, std::span<const Example> examples) {
    std::string out;
    for (const Example& e : examples) {
        out += nlohmann::json(e).dump();
        out += '\n';
    }
    write_file_atomic(path, out);
}

std::vector<Example> read_jsonl(const std::filesystem::path& path) {
    std::istringstream in(read_file(path));
    std::vector<Example> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            out.push_back(nlohmann::json::parse(line).get<Example>());
        } catch (const nlohmann::json::exception& e) {
            throw UsageError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    if (out.empty()) throw UsageError(path.string() + ": no examples");
    return out;
}

std::vector<AttributionInput> attribution_inputs(std::span<const Example> examples, bool paired) {
    std::vector<AttributionInput> out;
    for (const Example& e : examples) {
        AttributionInput in;
        in.x = e.tokens;
        if (paired) in.counterfactual = e.counterfactual;
        in.metric.row = static_cast<int>(e.tokens.size()) - 1;
        in.metric.coeffs = {{e.answer, 1.0}};
        if (e.counterfactual_answer >= 0) in.metric.coeffs.emplace_back(e.counterfactual_answer, -1.0);
        out.push_back(std::move(in));
    }
    return out;
}

std::vector<Tokens> all_inputs(std::span<const Example> examples) {
    std::vector<Tokens> out;
    for (const Example& e : examples) {
        out.push_back(e.tokens);
        if (e.counterfactual) out.push_back(*e.counterfactual);
    }
    return out;
}

}  // namespace neurotrace
