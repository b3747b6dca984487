#pragma once

// JSON bindings for every serialized type, kept in one place so the on-disk
// schemas are easy to audit. Standalone files carry a "format" version tag:
// sparseft-ckpt-v1, sparseft-run-v1, sparseft-stab-v1.

#include <json.hpp>

#include "sparseft/harness.hpp"
#include "sparseft/model.hpp"
#include "sparseft/selection.hpp"
#include "sparseft/synth.hpp"
#include "sparseft/theory.hpp"
#include "sparseft/training.hpp"

namespace sparseft {

std::string to_string(Activation a);
std::string to_string(HeadKind h);
std::string to_string(AugmentKind a);
Activation activation_from_string(const std::string& s);
HeadKind head_from_string(const std::string& s);
AugmentKind augment_from_string(const std::string& s);

void to_json(nlohmann::json& j, const ModelSpec& s);
void from_json(const nlohmann::json& j, ModelSpec& s);

void to_json(nlohmann::json& j, const SparseMask& m);
void from_json(const nlohmann::json& j, SparseMask& m);

void to_json(nlohmann::json& j, const StrategyConfig& c);
void from_json(const nlohmann::json& j, StrategyConfig& c);

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

void to_json(nlohmann::json& j, const EvalResult& e);
void from_json(const nlohmann::json& j, EvalResult& e);

void to_json(nlohmann::json& j, const RunReport& r);
void from_json(const nlohmann::json& j, RunReport& r);

void to_json(nlohmann::json& j, const BoundInputs& b);
void from_json(const nlohmann::json& j, BoundInputs& b);

void to_json(nlohmann::json& j, const StabilityReport& r);
void from_json(const nlohmann::json& j, StabilityReport& r);

void to_json(nlohmann::json& j, const TaskSpec& t);
void from_json(const nlohmann::json& j, TaskSpec& t);

void to_json(nlohmann::json& j, const ProjectionDemoReport& r);

void to_json(nlohmann::json& j, const ExperimentConfig& c);
void from_json(const nlohmann::json& j, ExperimentConfig& c);

}  // namespace sparseft
