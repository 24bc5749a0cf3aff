// Copyright 2026 the fairitr authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <fstream>
#include <string>

#include <json.hpp>

#include "fairitr/cate.hpp"
#include "fairitr/dataset.hpp"
#include "fairitr/metrics.hpp"
#include "fairitr/nuisance.hpp"
#include "fairitr/solver.hpp"
#include "fairitr/transport.hpp"

namespace fairitr {

using json = nlohmann::json;

inline constexpr int model_format_version = 1;

// ---------------------------------------------------------------------------
// Schema
// ---------------------------------------------------------------------------

inline CsvSchema schema_from_json(const json& j) {
    CsvSchema schema;
    if (!j.contains("covariates") || !j.contains("group"))
        throw IngestError("schema: must declare 'covariates' and 'group'");
    for (const auto& c : j.at("covariates")) schema.covariates.push_back(c.get<std::string>());
    schema.group = j.at("group").get<std::string>();
    if (j.contains("treatment")) {
        const auto& t = j.at("treatment");
        schema.treatment = CsvSchema::Treatment{t.at("column").get<std::string>(),
                                                t.at("positive").get<std::string>(),
                                                t.at("negative").get<std::string>()};
    }
    if (j.contains("reward")) schema.reward = j.at("reward").get<std::string>();
    if (j.contains("delimiter")) {
        const auto d = j.at("delimiter").get<std::string>();
        if (d.size() != 1) throw IngestError("schema: delimiter must be a single character");
        schema.delimiter = d[0];
    }
    return schema;
}

inline CsvSchema load_schema(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IngestError("schema: cannot open '" + path + "'");
    json j;
    in >> j;
    return schema_from_json(j);
}

inline json schema_to_json(const CsvSchema& schema) {
    json j;
    j["covariates"] = schema.covariates;
    j["group"] = schema.group;
    if (schema.treatment)
        j["treatment"] = {{"column", schema.treatment->column},
                          {"positive", schema.treatment->positive},
                          {"negative", schema.treatment->negative}};
    if (schema.reward) j["reward"] = *schema.reward;
    j["delimiter"] = std::string(1, schema.delimiter);
    return j;
}

// ---------------------------------------------------------------------------
// Models
// ---------------------------------------------------------------------------

inline json scaler_to_json(const FeatureScaler& sc) {
    return json{{"mean", sc.mean}, {"scale", sc.scale}};
}

inline FeatureScaler scaler_from_json(const json& j) {
    FeatureScaler sc;
    sc.mean = j.at("mean").get<std::vector<double>>();
    sc.scale = j.at("scale").get<std::vector<double>>();
    return sc;
}

inline json kernel_to_json(const KernelSpec& k) {
    return json{{"kind", to_string(k.kind)}, {"bandwidth", k.bandwidth}};
}

inline KernelSpec kernel_from_json(const json& j) {
    return {kernel_kind_from_string(j.at("kind").get<std::string>()),
            j.at("bandwidth").get<double>()};
}

inline json decision_model_to_json(const DecisionModel& m) {
    json j;
    j["kernel"] = kernel_to_json(m.kernel);
    j["scaler"] = scaler_to_json(m.scaler);
    j["groups"] = m.groups;
    j["support_x"] = m.support_x;
    j["support_s"] = m.support_s;
    j["dual"] = m.dual;
    j["intercept"] = m.intercept;
    return j;
}

inline DecisionModel decision_model_from_json(const json& j) {
    DecisionModel m;
    m.kernel = kernel_from_json(j.at("kernel"));
    m.scaler = scaler_from_json(j.at("scaler"));
    m.groups = j.at("groups").get<std::vector<std::string>>();
    m.support_x = j.at("support_x").get<std::vector<std::vector<double>>>();
    m.support_s = j.at("support_s").get<std::vector<int>>();
    m.dual = j.at("dual").get<std::vector<double>>();
    m.intercept = j.at("intercept").get<double>();
    if (m.dual.size() != m.support_x.size())
        throw IngestError("model: dual coefficient count differs from support point count");
    m.finalize();
    return m;
}

inline json propensity_to_json(const PropensityModel& p) {
    return json{{"coefficients", p.coefficients},
                {"d", p.d},
                {"n_groups", p.n_groups},
                {"tau_floor", p.tau_floor}};
}

inline PropensityModel propensity_from_json(const json& j) {
    PropensityModel p;
    p.coefficients = j.at("coefficients").get<std::vector<double>>();
    p.d = j.at("d").get<std::size_t>();
    p.n_groups = j.at("n_groups").get<std::size_t>();
    p.tau_floor = j.at("tau_floor").get<double>();
    return p;
}

inline json cate_to_json(const CateModel& c) {
    return json{{"tau_head", decision_model_to_json(c.tau_head)}, {"fold_of", c.fold_of}};
}

inline CateModel cate_from_json(const json& j) {
    CateModel c;
    c.tau_head = decision_model_from_json(j.at("tau_head"));
    c.fold_of = j.at("fold_of").get<std::vector<int>>();
    return c;
}

inline json dists_to_json(const GroupDistributions& d) {
    json j;
    j["groups"] = d.groups;
    j["values"] = d.values;
    j["freq"] = d.freq;
    j["sigma"] = d.sigma;
    j["jitter_seed"] = d.jitter_seed;
    return j;
}

inline GroupDistributions dists_from_json(const json& j) {
    GroupDistributions d;
    d.groups = j.at("groups").get<std::vector<std::string>>();
    d.values = j.at("values").get<std::vector<std::vector<double>>>();
    d.freq = j.at("freq").get<std::vector<double>>();
    d.sigma = j.at("sigma").get<double>();
    d.jitter_seed = j.at("jitter_seed").get<std::uint64_t>();
    return d;
}

/// Everything cmd_fit produces and cmd_audit can reuse.
struct ModelBundle {
    PropensityModel propensity;
    DecisionModel base;
    std::optional<CateModel> cate;
};

inline json bundle_to_json(const ModelBundle& b) {
    json j;
    j["format"] = "fairitr-model";
    j["version"] = model_format_version;
    j["propensity"] = propensity_to_json(b.propensity);
    j["base"] = decision_model_to_json(b.base);
    if (b.cate) j["cate"] = cate_to_json(*b.cate);
    return j;
}

inline ModelBundle bundle_from_json(const json& j) {
    if (j.value("format", "") != "fairitr-model")
        throw IngestError("model: not a fairitr model document");
    if (j.value("version", 0) != model_format_version)
        throw IngestError("model: unsupported format version");
    ModelBundle b;
    b.propensity = propensity_from_json(j.at("propensity"));
    b.base = decision_model_from_json(j.at("base"));
    if (j.contains("cate")) b.cate = cate_from_json(j.at("cate"));
    return b;
}

// ---------------------------------------------------------------------------
// Reports and selections
// ---------------------------------------------------------------------------

inline json report_to_json(const FairnessReport& r) {
    json j;
    j["policy"] = r.policy;
    j["di"] = r.di;
    j["di_degenerate"] = r.di_degenerate;
    j["value"] = r.value;
    j["ks"] = r.ks;
    j["positive_rate"] = r.positive_rate;
    j["group_n"] = r.group_n;
    return j;
}

/// One-line CSV form, for pasting into curve files.
inline std::string report_csv_line(const FairnessReport& r) {
    std::string line = r.policy;
    auto add = [&line](double v) {
        char buf[40];
        auto res = std::to_chars(buf, buf + sizeof buf, v);
        line += ',';
        line.append(buf, res.ptr);
    };
    add(r.di);
    add(r.value);
    add(r.ks);
    for (const auto& [g, rate] : r.positive_rate) add(rate);
    return line;
}

inline json selection_to_json(const AlphaSelection& s) {
    json j;
    j["alpha_hat"] = s.alpha_hat;
    j["beta"] = s.beta;
    j["gamma"] = s.gamma;
    j["value_hat"] = s.value_hat;
    j["feasible"] = s.feasible;
    json slack = json::array();
    for (const auto& ps : s.slack)
        slack.push_back(json{{"s", ps.s},
                             {"s_prime", ps.s_prime},
                             {"surrogate", ps.surrogate},
                             {"indicator", ps.indicator}});
    j["slack"] = slack;
    json trace = json::array();
    for (const auto& cell : s.trace)
        trace.push_back(json{{"beta", cell.beta},
                             {"gamma", cell.gamma},
                             {"alpha", cell.alpha},
                             {"value_hat", cell.value_hat},
                             {"max_slack", cell.max_slack},
                             {"feasible", cell.feasible}});
    j["trace"] = trace;
    return j;
}

inline void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IngestError("cannot write '" + path + "'");
    out << content;
}

inline void write_json_file(const std::string& path, const json& j) {
    write_text_file(path, j.dump(2) + "\n");
}

} // namespace fairitr
