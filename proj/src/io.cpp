#include "enel/io.hpp"

#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

namespace enel {

namespace {

Json matrix_to_json(const Eigen::MatrixXd& m) {
    std::vector<double> flat;
    flat.reserve(static_cast<std::size_t>(m.size()));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) flat.push_back(m(r, c));
    }
    return flat;
}

Eigen::MatrixXd matrix_from_json(const Json& j, std::size_t rows, std::size_t cols, const char* what) {
    const auto flat = j.get<std::vector<double>>();
    if (flat.size() != rows * cols) {
        throw ConfigError(std::string(what) + ": expected " + std::to_string(rows * cols) + " values, got " +
                          std::to_string(flat.size()));
    }
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = flat[r * cols + c];
    }
    return m;
}

Json vector_to_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Eigen::VectorXd vector_from_json(const Json& j, std::size_t size, const char* what) {
    const auto values = j.get<std::vector<double>>();
    if (values.size() != size) {
        throw ConfigError(std::string(what) + ": expected " + std::to_string(size) + " values, got " +
                          std::to_string(values.size()));
    }
    return Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

Json dense_to_json(const nn::Dense& d) {
    return {{"rows", d.outputs()}, {"cols", d.inputs()}, {"w", matrix_to_json(d.weight)}, {"b", vector_to_json(d.bias)}};
}

nn::Dense dense_from_json(const Json& j) {
    const auto rows = j.at("rows").get<std::size_t>();
    const auto cols = j.at("cols").get<std::size_t>();
    nn::Dense d(cols, rows);
    d.weight = matrix_from_json(j.at("w"), rows, cols, "dense weight");
    d.bias = vector_from_json(j.at("b"), rows, "dense bias");
    return d;
}

Json mlp_to_json(const nn::Mlp& m) {
    return {{"hidden", dense_to_json(m.hidden)},
            {"output", dense_to_json(m.output)},
            {"hidden_activation", nn::to_string(m.hidden_activation)},
            {"output_activation", nn::to_string(m.output_activation)}};
}

nn::Mlp mlp_from_json(const Json& j) {
    nn::Mlp m;
    m.hidden = dense_from_json(j.at("hidden"));
    m.output = dense_from_json(j.at("output"));
    if (m.output.inputs() != m.hidden.outputs()) throw ConfigError("mlp: hidden and output layer shapes differ");
    m.hidden_activation = nn::activation_from_string(j.at("hidden_activation").get<std::string>());
    m.output_activation = nn::activation_from_string(j.at("output_activation").get<std::string>());
    return m;
}

Json property_to_json(const Property& p) {
    Json value = std::holds_alternative<std::uint64_t>(p.value) ? Json(std::get<std::uint64_t>(p.value))
                                                                : Json(std::get<std::string>(p.value));
    return {{"group", to_string(p.group)}, {"key", p.key}, {"value", value}};
}

Property property_from_json(const Json& j) {
    Property p;
    p.group = property_group_from_string(j.at("group").get<std::string>());
    p.key = j.at("key").get<std::string>();
    const auto& v = j.at("value");
    if (v.is_number_unsigned()) {
        p.value = v.get<std::uint64_t>();
    } else if (v.is_string()) {
        p.value = v.get<std::string>();
    } else {
        throw ConfigError("property " + p.key + ": value must be a non-negative integer or a string");
    }
    return p;
}

template <typename T>
void read_if(const Json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

Json optional_number(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

std::optional<double> optional_from(const Json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return j.at(key).get<double>();
}

}  // namespace

Json to_json(const AutoencoderParams& p) {
    return {{"n", p.n},
            {"m", p.m},
            {"activation", p.activation == EncoderActivation::tanh ? "tanh" : "linear"},
            {"enc_w", matrix_to_json(p.enc_w)},
            {"enc_b", vector_to_json(p.enc_b)},
            {"dec_w", matrix_to_json(p.dec_w)},
            {"dec_b", vector_to_json(p.dec_b)}};
}

AutoencoderParams autoencoder_from_json(const Json& j) {
    const auto n = j.at("n").get<std::size_t>();
    const auto m = j.at("m").get<std::size_t>();
    EncoderActivation activation = EncoderActivation::tanh;
    if (j.contains("activation")) {
        const auto name = j.at("activation").get<std::string>();
        if (name == "linear") {
            activation = EncoderActivation::linear;
        } else if (name != "tanh") {
            throw ConfigError("autoencoder: unknown activation '" + name + "'");
        }
    }
    AutoencoderParams p(n, m, activation);
    p.enc_w = matrix_from_json(j.at("enc_w"), m, n, "enc_w");
    p.enc_b = vector_from_json(j.at("enc_b"), m, "enc_b");
    p.dec_w = matrix_from_json(j.at("dec_w"), n, m, "dec_w");
    p.dec_b = vector_from_json(j.at("dec_b"), n, "dec_b");
    return p;
}

Json to_json(const EnelModel& model, const std::string& autoencoder_ref) {
    const auto& c = model.config;
    Json config = {{"embedding_dim", c.embedding_dim},
                   {"metric_dim", c.metric_dim},
                   {"hidden_width", c.hidden_width},
                   {"attention_dim", c.attention_dim},
                   {"runtime_scale", c.runtime_scale},
                   {"scaleout_scale", c.scaleout_scale},
                   {"overhead_weight", c.overhead_weight},
                   {"transition_time_fraction", c.transition_time_fraction},
                   {"beta", c.beta}};
    return {{"config", config},
            {"params_f1", mlp_to_json(model.f1)},
            {"params_f2", mlp_to_json(model.f2)},
            {"params_f3", mlp_to_json(model.f3)},
            {"params_f4", mlp_to_json(model.f4)},
            {"attention", vector_to_json(model.attention)},
            {"autoencoder_ref", autoencoder_ref},
            {"trained_on_runs", model.trained_on_runs}};
}

EnelModel model_from_json(const Json& j) {
    ModelConfig c;
    const auto& cj = j.at("config");
    read_if(cj, "embedding_dim", c.embedding_dim);
    read_if(cj, "metric_dim", c.metric_dim);
    read_if(cj, "hidden_width", c.hidden_width);
    read_if(cj, "attention_dim", c.attention_dim);
    read_if(cj, "runtime_scale", c.runtime_scale);
    read_if(cj, "scaleout_scale", c.scaleout_scale);
    read_if(cj, "overhead_weight", c.overhead_weight);
    read_if(cj, "transition_time_fraction", c.transition_time_fraction);
    read_if(cj, "beta", c.beta);

    EnelModel model = EnelModel::create(c, 0);
    auto load = [&](const char* key, nn::Mlp& target) {
        nn::Mlp m = mlp_from_json(j.at(key));
        if (m.inputs() != target.inputs() || m.outputs() != target.outputs() ||
            m.hidden.outputs() != target.hidden.outputs()) {
            throw ConfigError(std::string("checkpoint: ") + key + " shape does not match the config");
        }
        target = std::move(m);
    };
    load("params_f1", model.f1);
    load("params_f2", model.f2);
    load("params_f3", model.f3);
    load("params_f4", model.f4);
    model.attention = vector_from_json(j.at("attention"), c.attention_dim, "attention");
    read_if(j, "trained_on_runs", model.trained_on_runs);
    return model;
}

Json to_json(const BellModel& model) {
    Json j = {{"kind", to_string(model.kind)}};
    if (model.kind == BellKind::parametric) {
        j["theta"] = model.theta;
    } else {
        Json samples = Json::array();
        for (const auto& [s, t] : model.points) samples.push_back({s, t});
        j["samples"] = samples;
    }
    return j;
}

BellModel bell_from_json(const Json& j) {
    BellModel model;
    model.kind = bell_kind_from_string(j.at("kind").get<std::string>());
    if (model.kind == BellKind::parametric) {
        const auto theta = j.at("theta").get<std::vector<double>>();
        if (theta.size() != 4) throw ConfigError("bell model: theta needs 4 coefficients");
        std::copy(theta.begin(), theta.end(), model.theta.begin());
    } else {
        for (const auto& p : j.at("samples")) model.points.emplace_back(p.at(0).get<int>(), p.at(1).get<double>());
        if (model.points.empty()) throw ConfigError("bell model: no samples");
        std::sort(model.points.begin(), model.points.end());
    }
    return model;
}

Json to_json(const ExperimentConfig& c) {
    Json phases = Json::array();
    for (const auto& p : c.failure_phases) phases.push_back({p.first, p.last});
    Json controllers = Json::array();
    for (auto k : c.controllers) controllers.push_back(to_string(k));
    return {
        {"profile", c.profile},
        {"target", c.target},
        {"target_factor", c.target_factor},
        {"runs", c.runs},
        {"profiling_runs", c.profiling_runs},
        {"retrain_period", c.retrain_period},
        {"window", c.window},
        {"failure_phases", phases},
        {"controllers", controllers},
        {"static_scaleout", c.static_scaleout},
        {"seed", c.seed},
        {"env",
         {{"min_scaleout", c.env.min_scaleout},
          {"max_scaleout", c.env.max_scaleout},
          {"rescale_latency", c.env.rescale_latency},
          {"executor_recovery_delay", c.env.executor_recovery_delay},
          {"noise_level", c.env.noise_level},
          {"failure_slowdown", c.env.failure_slowdown},
          {"failure_rework", c.env.failure_rework}}},
        {"failures",
         {{"enabled", c.failures.enabled},
          {"interval", c.failures.interval},
          {"min_executors", c.failures.min_executors}}},
        {"range", {c.range.min, c.range.max}},
        {"safety",
         {{"hysteresis_step", c.safety.hysteresis_step},
          {"hysteresis_fraction", c.safety.hysteresis_fraction},
          {"target_margin", c.safety.target_margin},
          {"finetune_epochs", c.safety.finetune_epochs},
          {"finetune_learning_rate", c.safety.finetune_learning_rate},
          {"finetune_optimizer", nn::to_string(c.safety.finetune_optimizer)},
          {"finetune_budget_s", c.safety.finetune_budget_s}}},
        {"learning",
         {{"train_epochs", c.learning.train_epochs},
          {"finetune_epochs", c.learning.finetune_epochs},
          {"history_cap", c.learning.history_cap},
          {"encoder_epochs", c.learning.encoder_epochs},
          {"learning_rate", c.learning.learning_rate},
          {"finetune_learning_rate", c.learning.finetune_learning_rate},
          {"model_seed", c.learning.model_seed}}},
    };
}

ExperimentConfig experiment_config_from_json(const Json& j) {
    if (!j.is_object()) throw ConfigError("experiment config must be a JSON object");
    ExperimentConfig c;
    try {
        read_if(j, "profile", c.profile);
        read_if(j, "target", c.target);
        read_if(j, "target_factor", c.target_factor);
        read_if(j, "runs", c.runs);
        read_if(j, "profiling_runs", c.profiling_runs);
        read_if(j, "retrain_period", c.retrain_period);
        read_if(j, "window", c.window);
        read_if(j, "seed", c.seed);
        if (j.contains("failure_phases")) {
            c.failure_phases.clear();
            for (const auto& p : j.at("failure_phases")) c.failure_phases.push_back({p.at(0).get<int>(), p.at(1).get<int>()});
        }
        if (j.contains("controllers")) {
            c.controllers.clear();
            for (const auto& k : j.at("controllers")) c.controllers.push_back(controller_kind_from_string(k.get<std::string>()));
        }
        read_if(j, "static_scaleout", c.static_scaleout);
        if (j.contains("env")) {
            const auto& e = j.at("env");
            read_if(e, "min_scaleout", c.env.min_scaleout);
            read_if(e, "max_scaleout", c.env.max_scaleout);
            read_if(e, "rescale_latency", c.env.rescale_latency);
            read_if(e, "executor_recovery_delay", c.env.executor_recovery_delay);
            read_if(e, "noise_level", c.env.noise_level);
            read_if(e, "failure_slowdown", c.env.failure_slowdown);
            read_if(e, "failure_rework", c.env.failure_rework);
        }
        if (j.contains("failures")) {
            const auto& f = j.at("failures");
            read_if(f, "enabled", c.failures.enabled);
            read_if(f, "interval", c.failures.interval);
            read_if(f, "min_executors", c.failures.min_executors);
        }
        if (j.contains("range")) {
            c.range.min = j.at("range").at(0).get<int>();
            c.range.max = j.at("range").at(1).get<int>();
        }
        if (j.contains("safety")) {
            const auto& s = j.at("safety");
            read_if(s, "hysteresis_step", c.safety.hysteresis_step);
            read_if(s, "hysteresis_fraction", c.safety.hysteresis_fraction);
            read_if(s, "target_margin", c.safety.target_margin);
            read_if(s, "finetune_epochs", c.safety.finetune_epochs);
            read_if(s, "finetune_learning_rate", c.safety.finetune_learning_rate);
            if (s.contains("finetune_optimizer")) {
                c.safety.finetune_optimizer = nn::optimizer_kind_from_string(s.at("finetune_optimizer").get<std::string>());
            }
            read_if(s, "finetune_budget_s", c.safety.finetune_budget_s);
        }
        if (j.contains("learning")) {
            const auto& l = j.at("learning");
            read_if(l, "train_epochs", c.learning.train_epochs);
            read_if(l, "finetune_epochs", c.learning.finetune_epochs);
            read_if(l, "history_cap", c.learning.history_cap);
            read_if(l, "encoder_epochs", c.learning.encoder_epochs);
            read_if(l, "learning_rate", c.learning.learning_rate);
            read_if(l, "finetune_learning_rate", c.learning.finetune_learning_rate);
            read_if(l, "model_seed", c.learning.model_seed);
        }
        validate(c);
        if (!(c.failures.interval > 0.0)) throw std::invalid_argument("experiment: failure interval must be positive");
    } catch (const Json::exception& e) {
        throw ConfigError(std::string("experiment config: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    return c;
}

Json to_json(const ExperimentReport& r) {
    Json runs = Json::array();
    for (const auto& x : r.runs) {
        runs.push_back({{"run", x.run},
                        {"run_id", x.run_id},
                        {"controller", x.controller},
                        {"profiling", x.profiling},
                        {"failures", x.failures},
                        {"runtime_s", x.runtime_s},
                        {"target_s", x.target_s},
                        {"cvc", x.cvc},
                        {"cvs_s", x.cvs_s},
                        {"scaleouts", x.scaleouts},
                        {"fit_s", x.fit_s},
                        {"predict_s", x.predict_s},
                        {"requests", x.requests},
                        {"prediction_error", optional_number(x.prediction_error)}});
    }
    Json windows = Json::array();
    for (const auto& w : r.windows) {
        windows.push_back({{"controller", w.controller},
                           {"first_run", w.first_run},
                           {"last_run", w.last_run},
                           {"cvc_mean", w.cvc_mean},
                           {"cvc_median", w.cvc_median},
                           {"cvs_mean_min", w.cvs_mean_min},
                           {"cvs_median_min", w.cvs_median_min},
                           {"prediction_error", optional_number(w.prediction_error)}});
    }
    Json timings = Json::array();
    for (const auto& t : r.timings) {
        timings.push_back({{"controller", t.controller},
                           {"run", t.run},
                           {"component", t.component},
                           {"fit_s", t.fit_s},
                           {"predict_s", t.predict_s}});
    }
    return {{"profile", r.profile}, {"seed", r.seed},   {"target_s", r.target_s}, {"profiling_runs", r.profiling_runs},
            {"runs", runs},         {"windows", windows}, {"timings", timings}};
}

ExperimentReport report_from_json(const Json& j) {
    ExperimentReport r;
    r.profile = j.at("profile").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.target_s = j.at("target_s").get<double>();
    r.profiling_runs = j.at("profiling_runs").get<int>();
    for (const auto& x : j.at("runs")) {
        RunRecord rec;
        rec.run = x.at("run").get<int>();
        rec.run_id = x.at("run_id").get<std::string>();
        rec.controller = x.at("controller").get<std::string>();
        rec.profiling = x.at("profiling").get<bool>();
        rec.failures = x.at("failures").get<bool>();
        rec.runtime_s = x.at("runtime_s").get<double>();
        rec.target_s = x.at("target_s").get<double>();
        rec.cvc = x.at("cvc").get<int>();
        rec.cvs_s = x.at("cvs_s").get<double>();
        rec.scaleouts = x.at("scaleouts").get<std::vector<int>>();
        rec.fit_s = x.at("fit_s").get<double>();
        rec.predict_s = x.at("predict_s").get<double>();
        rec.requests = x.at("requests").get<std::size_t>();
        rec.prediction_error = optional_from(x, "prediction_error");
        r.runs.push_back(std::move(rec));
    }
    for (const auto& x : j.at("windows")) {
        r.windows.push_back({x.at("controller").get<std::string>(), x.at("first_run").get<int>(),
                             x.at("last_run").get<int>(), x.at("cvc_mean").get<double>(),
                             x.at("cvc_median").get<double>(), x.at("cvs_mean_min").get<double>(),
                             x.at("cvs_median_min").get<double>(), optional_from(x, "prediction_error")});
    }
    for (const auto& x : j.at("timings")) {
        r.timings.push_back({x.at("controller").get<std::string>(), x.at("run").get<int>(),
                             x.at("component").get<int>(), x.at("fit_s").get<double>(),
                             x.at("predict_s").get<double>()});
    }
    return r;
}

Json to_json(const DecisionRecord& d) {
    Json candidates = Json::object();
    for (const auto& [s, t] : d.candidates) candidates[std::to_string(s)] = t;
    return {{"run_id", d.run_id},         {"controller", d.controller}, {"component", d.component},
            {"elapsed_s", d.elapsed_s},   {"candidates", candidates},   {"chosen", d.chosen},
            {"reason", d.reason}};
}

DecisionRecord decision_from_json(const Json& j) {
    DecisionRecord d;
    d.run_id = j.at("run_id").get<std::string>();
    read_if(j, "controller", d.controller);
    d.component = j.at("component").get<int>();
    d.elapsed_s = j.at("elapsed_s").get<double>();
    for (const auto& [key, value] : j.at("candidates").items()) d.candidates[std::stoi(key)] = value.get<double>();
    d.chosen = j.at("chosen").get<int>();
    d.reason = j.at("reason").get<std::string>();
    return d;
}

void write_trace_jsonl(std::ostream& out, const JobExecution& job) {
    for (std::size_t k = 0; k < job.components.size(); ++k) {
        const auto& g = job.components[k];
        const auto preds = g.predecessors();
        for (std::size_t i = 0; i < g.nodes.size(); ++i) {
            const auto& n = g.nodes[i];
            std::vector<std::string> pred_ids;
            for (std::size_t p : preds[i]) pred_ids.push_back(g.nodes[p].id);
            Json refs = Json::array();
            for (const auto& p : job.properties) refs.push_back(property_to_json(p));
            for (const auto& p : n.properties) refs.push_back(property_to_json(p));
            Json record = {{"run_id", job.run_id},
                           {"component", k},
                           {"node_id", n.id},
                           {"preds", pred_ids},
                           {"a", n.start_scaleout},
                           {"z", n.end_scaleout},
                           {"r", n.time_fraction},
                           {"metrics", n.metrics},
                           {"context_prop_refs", refs},
                           {"runtime_s", optional_number(n.runtime)},
                           {"start_s", n.start_time},
                           {"target_s", job.runtime_target},
                           {"component_wall_s", k < job.component_wall_times.size()
                                                    ? Json(job.component_wall_times[k])
                                                    : Json(nullptr)}};
            out << record.dump() << '\n';
        }
    }
}

std::vector<JobExecution> read_trace_jsonl(std::istream& in) {
    std::vector<JobExecution> jobs;
    std::map<std::string, std::size_t> index;
    std::vector<std::vector<std::vector<std::vector<std::string>>>> pending_preds;  // job, component, node
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            const Json r = Json::parse(line);
            const auto run_id = r.at("run_id").get<std::string>();
            auto [it, inserted] = index.try_emplace(run_id, jobs.size());
            if (inserted) {
                JobExecution job;
                job.run_id = run_id;
                job.runtime_target = r.value("target_s", 0.0);
                for (const auto& p : r.at("context_prop_refs")) {
                    Property prop = property_from_json(p);
                    if (prop.group != PropertyGroup::node) job.properties.push_back(std::move(prop));
                }
                jobs.push_back(std::move(job));
                pending_preds.emplace_back();
            }
            auto& job = jobs[it->second];
            auto& preds = pending_preds[it->second];
            const auto k = r.at("component").get<std::size_t>();
            if (k >= job.components.size()) {
                job.components.resize(k + 1);
                preds.resize(k + 1);
                for (std::size_t c = 0; c <= k; ++c) job.components[c].index = static_cast<int>(c);
            }
            TaskNode node;
            node.id = r.at("node_id").get<std::string>();
            node.start_scaleout = r.at("a").get<int>();
            node.end_scaleout = r.at("z").get<int>();
            node.time_fraction = r.at("r").get<double>();
            node.metrics = r.at("metrics").get<std::vector<double>>();
            node.runtime = optional_from(r, "runtime_s");
            node.start_time = r.value("start_s", 0.0);
            for (const auto& p : r.at("context_prop_refs")) {
                Property prop = property_from_json(p);
                if (prop.group == PropertyGroup::node) node.properties.push_back(std::move(prop));
            }
            job.components[k].nodes.push_back(std::move(node));
            preds[k].push_back(r.at("preds").get<std::vector<std::string>>());
            if (auto wall = optional_from(r, "component_wall_s")) {
                if (job.component_wall_times.size() <= k) job.component_wall_times.resize(k + 1, 0.0);
                job.component_wall_times[k] = *wall;
            }
        } catch (const Json::exception& e) {
            throw ConfigError("trace line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    for (std::size_t j = 0; j < jobs.size(); ++j) {
        for (std::size_t k = 0; k < jobs[j].components.size(); ++k) {
            auto& g = jobs[j].components[k];
            std::map<std::string, std::size_t> ids;
            for (std::size_t i = 0; i < g.nodes.size(); ++i) ids[g.nodes[i].id] = i;
            for (std::size_t i = 0; i < g.nodes.size(); ++i) {
                for (const auto& p : pending_preds[j][k][i]) {
                    const auto found = ids.find(p);
                    if (found == ids.end()) {
                        throw ConfigError("trace " + jobs[j].run_id + ": unknown predecessor '" + p + "'");
                    }
                    g.edges.push_back({found->second, i});
                }
            }
        }
    }
    return jobs;
}

void write_loss_csv(std::ostream& out, std::span<const LossRecord> curve) {
    out << "epoch,total,runtime_mse,metric_mse,overhead_reg\n";
    for (const auto& r : curve) {
        out << r.epoch << ',' << r.loss.total << ',' << r.loss.runtime_mse << ',' << r.loss.metric_mse << ','
            << r.loss.overhead_reg << '\n';
    }
}

Json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read " + path.string());
    try {
        return Json::parse(in);
    } catch (const Json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

void write_json_file(const std::filesystem::path& path, const Json& j) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << j.dump(2) << '\n';
    if (!out) throw std::runtime_error("failed writing " + path.string());
}

}  // namespace enel
