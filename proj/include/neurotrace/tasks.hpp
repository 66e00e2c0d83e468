#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "neurotrace/attribution.hpp"

namespace neurotrace {

struct Example {
    Tokens tokens;
    std::optional<Tokens> counterfactual;
    int answer = 0;
    int counterfactual_answer = -1;  // -1 when unpaired
    std::map<std::string, std::string> labels;

    bool paired() const { return counterfactual.has_value(); }
    bool operator==(const Example&) const = default;
};

void to_json(nlohmann::json& j, const Example& e);
void from_json(const nlohmann::json& j, Example& e);

enum class TaskKind { agreement, addition };
enum class AgreementVariant { simple, nounpp };

struct TaskSpec {
    TaskKind kind = TaskKind::agreement;
    AgreementVariant variant = AgreementVariant::nounpp;
    int n_nouns = 16;     // agreement: singular/plural noun pairs
    int n_train = 300;    // agreement only; addition splits the full grid
    int n_eval = 40;
    double train_fraction = 0.8;  // addition
    std::uint64_t seed = 0;

    void validate() const;
    int vocab_size() const;
    int template_length() const;
};

void to_json(nlohmann::json& j, const TaskSpec& s);
void from_json(const nlohmann::json& j, TaskSpec& s);
// "agreement", "agreement_simple", "addition", or a path to a JSON spec.
TaskSpec task_from_name(const std::string& name_or_path);

struct Dataset {
    std::vector<Example> train;
    std::vector<Example> eval;
};

// Printable name for every token of the task's vocabulary.
std::vector<std::string> symbol_table(const TaskSpec& spec);

// Agreement layout: 0 BOS, 1 "the", 2 "near", nouns from 3 (singular 3+2i,
// plural 4+2i), then "is", "are". simple: BOS the N -> verb; nounpp:
// BOS the N near the N' -> verb. The counterfactual flips the subject's
// number and the answer.
Dataset gen_agreement(const TaskSpec& spec);

// Addition layout: 0 BOS, 1..10 digits, 11 "+", 12 "=", 13 + s for sum s
// in [0, 198]. Inputs are BOS a_tens a_ones + b_tens b_ones =; unpaired.
Dataset gen_addition(const TaskSpec& spec);

Dataset generate(const TaskSpec& spec);

// Labels recomputed from tokens alone.
std::map<std::string, std::string> agreement_labels(const TaskSpec& spec, const Tokens& tokens);
std::map<std::string, std::string> addition_labels(const Tokens& tokens);
std::map<std::string, std::string> recompute_labels(const TaskSpec& spec, const Tokens& tokens);

// Swaps the example with its counterfactual (agreement only).
Example flip(const TaskSpec& spec, const Example& e);

int addition_answer_token(int sum);

void write_jsonl(const std::filesystem::path& path, std::span<const Example> examples);
std::vector<Example> read_jsonl(const std::filesystem::path& path);

// Attribution inputs with the logit-difference metric for paired examples
// and the answer logit for unpaired ones, read at the last position.
// `paired = false` drops counterfactual inputs (zero baseline) but keeps
// the logit-difference metric when y' exists.
std::vector<AttributionInput> attribution_inputs(std::span<const Example> examples, bool paired = true);

// Clean token sequences (and counterfactuals if present), for means.
std::vector<Tokens> all_inputs(std::span<const Example> examples);

}  // namespace neurotrace
