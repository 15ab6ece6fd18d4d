#include "seil/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace seil::evo {

using nlohmann::json;

const char* pool_tag_name(PoolTag t) {
    switch (t) {
    case PoolTag::kP1: return "P1";
    case PoolTag::kP2: return "P2";
    case PoolTag::kP3: return "P3";
    case PoolTag::kP4: return "P4";
    case PoolTag::kP5: return "P5";
    }
    return "P1";
}

PoolTag pool_tag_from_name(const std::string& name) {
    if (name == "P1") return PoolTag::kP1;
    if (name == "P2") return PoolTag::kP2;
    if (name == "P3") return PoolTag::kP3;
    if (name == "P4") return PoolTag::kP4;
    if (name == "P5") return PoolTag::kP5;
    throw std::invalid_argument("unknown pool tag: " + name + " (expected P1..P5)");
}

void ExperimentConfig::validate() const {
    if (shots < 1) throw std::invalid_argument("shots must be >= 1");
    if (tau < 0.0f || tau >= 1.0f) throw std::invalid_argument("tau must be in [0,1)");
    if (rollouts_per_model < 1) throw std::invalid_argument("rollouts_per_model must be >= 1");
    if (selected_per_task < 0 || selected_per_task > 2 * rollouts_per_model)
        throw std::invalid_argument("selected_per_task must be in [0, 2*rollouts_per_model]");
    if (delta < 0.0) throw std::invalid_argument("delta must be >= 0");
    if (max_rounds < 0) throw std::invalid_argument("max_rounds must be >= 0");
    if (eval_rollouts < 1) throw std::invalid_argument("eval_rollouts must be >= 1");
    if (round0_steps < 0 || refine_steps < 0)
        throw std::invalid_argument("training step counts must be >= 0");
    if (batch_size < 1 || selector_batch < 1)
        throw std::invalid_argument("batch sizes must be >= 1");
    if (selector_epochs < 0) throw std::invalid_argument("selector_epochs must be >= 0");
    if (patience < 1) throw std::invalid_argument("patience must be >= 1");
    if (min_delta < 0.0) throw std::invalid_argument("min_delta must be >= 0");
    if (lr <= 0.0 || selector_lr <= 0.0) throw std::invalid_argument("learning rates must be > 0");
}

namespace {

std::set<PoolTag> parse_pool_filter(const std::string& value) {
    std::set<PoolTag> tags;
    if (value.empty()) return tags;
    std::string token;
    std::istringstream in(value);
    while (std::getline(in, token, '+'))
        if (!token.empty()) tags.insert(pool_tag_from_name(token));
    return tags;
}

std::string pool_filter_string(const std::set<PoolTag>& tags) {
    std::string out;
    for (PoolTag t : tags) {
        if (!out.empty()) out += '+';
        out += pool_tag_name(t);
    }
    return out;
}

using Setter = std::function<void(ExperimentConfig&, const json&)>;

template <class T>
Setter field(T ExperimentConfig::*member) {
    return [member](ExperimentConfig& cfg, const json& v) { cfg.*member = v.get<T>(); };
}

const std::map<std::string, Setter>& setters() {
    static const std::map<std::string, Setter> table = {
        {"master_seed", field(&ExperimentConfig::master_seed)},
        {"shots", field(&ExperimentConfig::shots)},
        {"rollouts_per_model", field(&ExperimentConfig::rollouts_per_model)},
        {"selected_per_task", field(&ExperimentConfig::selected_per_task)},
        {"tau", field(&ExperimentConfig::tau)},
        {"delta", field(&ExperimentConfig::delta)},
        {"max_rounds", field(&ExperimentConfig::max_rounds)},
        {"eval_rollouts", field(&ExperimentConfig::eval_rollouts)},
        {"m_aug", field(&ExperimentConfig::m_aug)},
        {"e_aug", field(&ExperimentConfig::e_aug)},
        {"use_selector", field(&ExperimentConfig::use_selector)},
        {"scheme",
         [](ExperimentConfig& cfg, const json& v) {
             cfg.scheme = selector::scheme_from_name(v.get<std::string>());
         }},
        {"retrain_from_scratch", field(&ExperimentConfig::retrain_from_scratch)},
        {"sequence_only_selector", field(&ExperimentConfig::sequence_only_selector)},
        {"retrain_selector_each_round", field(&ExperimentConfig::retrain_selector_each_round)},
        {"pool_filter",
         [](ExperimentConfig& cfg, const json& v) {
             cfg.pool_filter.clear();
             if (v.is_string()) {
                 cfg.pool_filter = parse_pool_filter(v.get<std::string>());
             } else {
                 for (const auto& item : v)
                     cfg.pool_filter.insert(pool_tag_from_name(item.get<std::string>()));
             }
         }},
        {"round0_steps", field(&ExperimentConfig::round0_steps)},
        {"refine_steps", field(&ExperimentConfig::refine_steps)},
        {"batch_size", field(&ExperimentConfig::batch_size)},
        {"lr", field(&ExperimentConfig::lr)},
        {"selector_epochs", field(&ExperimentConfig::selector_epochs)},
        {"selector_batch", field(&ExperimentConfig::selector_batch)},
        {"selector_lr", field(&ExperimentConfig::selector_lr)},
        {"patience", field(&ExperimentConfig::patience)},
        {"min_delta", field(&ExperimentConfig::min_delta)},
    };
    return table;
}

} // namespace

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config: " + path);
    json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw std::runtime_error(path + ": config parse error: " + e.what());
    }
    if (!j.is_object()) throw std::runtime_error(path + ": config must be a JSON object");
    ExperimentConfig cfg;
    for (const auto& [key, value] : j.items()) {
        const auto it = setters().find(key);
        if (it == setters().end())
            throw std::runtime_error(path + ": unknown config key: " + key);
        try {
            it->second(cfg, value);
        } catch (const std::exception& e) {
            throw std::runtime_error(path + ": bad value for " + key + ": " + e.what());
        }
    }
    cfg.validate();
    return cfg;
}

void apply_override(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
    const auto it = setters().find(key);
    if (it == setters().end()) throw std::invalid_argument("unknown config key: " + key);
    json v;
    if (key == "scheme" || key == "pool_filter") {
        v = value;
    } else if (value == "true" || value == "false") {
        v = (value == "true");
    } else {
        try {
            if (value.find_first_of(".eE") != std::string::npos)
                v = std::stod(value);
            else if (!value.empty() && value[0] == '-')
                v = std::stoll(value);
            else
                v = std::stoull(value);
        } catch (const std::exception&) {
            throw std::invalid_argument("bad value for " + key + ": " + value);
        }
    }
    try {
        it->second(cfg, v);
    } catch (const std::exception& e) {
        throw std::invalid_argument("bad value for " + key + ": " + e.what());
    }
}

std::string config_echo_json(const ExperimentConfig& cfg) {
    json j;
    j["master_seed"] = cfg.master_seed;
    j["shots"] = cfg.shots;
    j["rollouts_per_model"] = cfg.rollouts_per_model;
    j["selected_per_task"] = cfg.selected_per_task;
    j["tau"] = cfg.tau;
    j["delta"] = cfg.delta;
    j["max_rounds"] = cfg.max_rounds;
    j["eval_rollouts"] = cfg.eval_rollouts;
    j["m_aug"] = cfg.m_aug;
    j["e_aug"] = cfg.e_aug;
    j["use_selector"] = cfg.use_selector;
    j["scheme"] = selector::scheme_name(cfg.scheme);
    j["retrain_from_scratch"] = cfg.retrain_from_scratch;
    j["sequence_only_selector"] = cfg.sequence_only_selector;
    j["retrain_selector_each_round"] = cfg.retrain_selector_each_round;
    j["pool_filter"] = pool_filter_string(cfg.pool_filter);
    j["round0_steps"] = cfg.round0_steps;
    j["refine_steps"] = cfg.refine_steps;
    j["batch_size"] = cfg.batch_size;
    j["lr"] = cfg.lr;
    j["selector_epochs"] = cfg.selector_epochs;
    j["selector_batch"] = cfg.selector_batch;
    j["selector_lr"] = cfg.selector_lr;
    j["patience"] = cfg.patience;
    j["min_delta"] = cfg.min_delta;
    return j.dump(2) + "\n";
}

} // namespace seil::evo
