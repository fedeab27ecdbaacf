#include "enel/graph.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <queue>
#include <set>
#include <stdexcept>

namespace enel {

std::array<double, 3> enrich_scaleout(double scaleout) {
    if (!(scaleout >= 1.0)) {
        throw std::invalid_argument("enrich_scaleout: scale-out must be >= 1, got " + std::to_string(scaleout));
    }
    return {1.0 - 1.0 / scaleout, std::log(scaleout), scaleout};
}

std::vector<std::vector<std::size_t>> ComponentGraph::predecessors() const {
    std::vector<std::vector<std::size_t>> preds(nodes.size());
    for (const auto& e : edges) preds.at(e.to).push_back(e.from);
    return preds;
}

std::vector<std::size_t> ComponentGraph::roots() const {
    std::vector<bool> has_pred(nodes.size(), false);
    for (const auto& e : edges) has_pred.at(e.to) = true;
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        if (!has_pred[i]) out.push_back(i);
    }
    return out;
}

std::vector<std::size_t> ComponentGraph::sinks() const {
    std::vector<bool> has_succ(nodes.size(), false);
    for (const auto& e : edges) has_succ.at(e.from) = true;
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        if (!has_succ[i]) out.push_back(i);
    }
    return out;
}

bool ComponentGraph::observed() const {
    return !nodes.empty() && std::all_of(nodes.begin(), nodes.end(), [](const TaskNode& n) { return n.observed(); });
}

std::size_t JobExecution::observed_prefix() const {
    std::size_t k = 0;
    while (k < components.size() && components[k].observed()) ++k;
    return k;
}

double JobExecution::total_wall_time() const {
    double total = 0.0;
    for (double w : component_wall_times) total += w;
    return total;
}

void validate(const JobExecution& job) {
    if (job.components.empty()) throw std::invalid_argument("job " + job.run_id + ": no components");
    if (!(job.runtime_target > 0.0)) throw std::invalid_argument("job " + job.run_id + ": runtime target must be > 0");
    for (std::size_t k = 0; k < job.components.size(); ++k) {
        const auto& g = job.components[k];
        if (g.index != static_cast<int>(k)) {
            throw std::invalid_argument("job " + job.run_id + ": component indices are not consecutive at " +
                                        std::to_string(k));
        }
        if (g.nodes.empty()) throw std::invalid_argument("job " + job.run_id + ": empty component");
        for (const auto& e : g.edges) {
            if (e.from >= g.nodes.size() || e.to >= g.nodes.size()) {
                throw std::invalid_argument("job " + job.run_id + ": edge refers to a missing node");
            }
        }
        topological_order(g);
        for (const auto& n : g.nodes) {
            if (n.start_scaleout < 1 || n.end_scaleout < 1) {
                throw std::invalid_argument("node " + n.id + ": scale-out must be >= 1");
            }
            if (n.time_fraction < 0.0 || n.time_fraction > 1.0) {
                throw std::invalid_argument("node " + n.id + ": time fraction outside [0, 1]");
            }
            for (double m : n.metrics) {
                if (!std::isfinite(m) || m < 0.0) throw std::invalid_argument("node " + n.id + ": invalid metric");
            }
            if (n.runtime && *n.runtime < 0.0) throw std::invalid_argument("node " + n.id + ": negative runtime");
        }
    }
}

std::vector<std::size_t> topological_order(const ComponentGraph& graph) {
    const std::size_t n = graph.nodes.size();
    std::vector<std::size_t> indegree(n, 0);
    std::vector<std::vector<std::size_t>> succ(n);
    for (const auto& e : graph.edges) {
        succ.at(e.from).push_back(e.to);
        ++indegree.at(e.to);
    }
    auto later = [&](std::size_t a, std::size_t b) {
        return std::tie(graph.nodes[a].id, a) > std::tie(graph.nodes[b].id, b);
    };
    std::priority_queue<std::size_t, std::vector<std::size_t>, decltype(later)> ready(later);
    for (std::size_t i = 0; i < n; ++i) {
        if (indegree[i] == 0) ready.push(i);
    }
    std::vector<std::size_t> order;
    order.reserve(n);
    while (!ready.empty()) {
        const std::size_t i = ready.top();
        ready.pop();
        order.push_back(i);
        for (std::size_t j : succ[i]) {
            if (--indegree[j] == 0) ready.push(j);
        }
    }
    if (order.size() != n) {
        // Every unprocessed node still has an unprocessed predecessor, so
        // walking backwards must revisit a node; that step is a cycle edge.
        const auto preds = graph.predecessors();
        std::size_t v = 0;
        while (indegree[v] == 0) ++v;
        std::vector<bool> seen(n, false);
        while (true) {
            seen[v] = true;
            std::size_t u = v;
            for (std::size_t p : preds[v]) {
                if (indegree[p] > 0) {
                    u = p;
                    break;
                }
            }
            if (seen[u]) {
                throw std::invalid_argument("cycle detected in component " + std::to_string(graph.index) +
                                            " at edge " + graph.nodes[u].id + " -> " + graph.nodes[v].id);
            }
            v = u;
        }
    }
    return order;
}

namespace {

void accumulate(std::vector<double>& sum, const std::vector<double>& v) {
    if (sum.empty()) sum.assign(v.size(), 0.0);
    if (sum.size() != v.size()) throw std::invalid_argument("summary: inconsistent vector lengths");
    for (std::size_t i = 0; i < v.size(); ++i) sum[i] += v[i];
}

void scale(std::vector<double>& v, double factor) {
    for (double& x : v) x *= factor;
}

}  // namespace

SummaryNode make_summary_p(const ComponentGraph& graph) {
    if (graph.nodes.empty()) {
        throw std::invalid_argument("make_summary_p: component " + std::to_string(graph.index) + " has no nodes");
    }
    const auto order = topological_order(graph);
    SummaryNode p;
    p.kind = SummaryKind::current;
    p.source_component = graph.index;
    p.start_scaleout = graph.nodes[order.front()].start_scaleout;
    p.end_scaleout = graph.nodes[order.back()].end_scaleout;

    std::size_t with_context = 0;
    std::size_t with_metrics = 0;
    for (const auto& n : graph.nodes) {
        if (!n.context.empty()) {
            accumulate(p.context, n.context);
            ++with_context;
        }
        if (!n.metrics.empty()) {
            accumulate(p.metrics, n.metrics);
            ++with_metrics;
        }
    }
    if (with_metrics == 0) {
        throw std::invalid_argument("make_summary_p: component " + std::to_string(graph.index) +
                                    " has no recorded metrics");
    }
    if (with_context > 0) scale(p.context, 1.0 / static_cast<double>(with_context));
    scale(p.metrics, 1.0 / static_cast<double>(with_metrics));
    return p;
}

SummaryNode select_historical_summaries(std::span<const SummaryNode> history, int current_scaleout, int beta) {
    if (history.empty()) throw std::invalid_argument("select_historical_summaries: empty history");
    if (beta < 1) throw std::invalid_argument("select_historical_summaries: beta must be positive");

    std::vector<std::size_t> ranked(history.size());
    for (std::size_t i = 0; i < ranked.size(); ++i) ranked[i] = i;
    std::stable_sort(ranked.begin(), ranked.end(), [&](std::size_t a, std::size_t b) {
        const int da = std::abs(history[a].end_scaleout - current_scaleout);
        const int db = std::abs(history[b].end_scaleout - current_scaleout);
        if (da != db) return da < db;
        return history[a].sequence > history[b].sequence;
    });
    const std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(beta), ranked.size());

    SummaryNode h;
    h.kind = SummaryKind::historical;
    h.source_component = history[ranked.front()].source_component;
    double start = 0.0;
    double end = 0.0;
    std::size_t newest = 0;
    for (std::size_t i = 0; i < take; ++i) {
        const auto& s = history[ranked[i]];
        start += s.start_scaleout;
        end += s.end_scaleout;
        accumulate(h.context, s.context);
        accumulate(h.metrics, s.metrics);
        newest = std::max(newest, s.sequence);
    }
    const double inv = 1.0 / static_cast<double>(take);
    h.start_scaleout = static_cast<int>(std::lround(start * inv));
    h.end_scaleout = static_cast<int>(std::lround(end * inv));
    scale(h.context, inv);
    scale(h.metrics, inv);
    h.sequence = newest;
    return h;
}

ComponentGraph attach_summary_nodes(ComponentGraph next, SummaryNode p, std::optional<SummaryNode> h) {
    if (next.roots().empty()) throw std::invalid_argument("attach_summary_nodes: graph has no root");
    next.summaries.clear();
    p.kind = SummaryKind::current;
    next.summaries.push_back(std::move(p));
    if (h) {
        h->kind = SummaryKind::historical;
        next.summaries.push_back(std::move(*h));
    }
    return next;
}

void SummaryHistory::add(int component, SummaryNode node) {
    node.sequence = next_sequence_++;
    by_component_[component].push_back(std::move(node));
}

void SummaryHistory::add_run(const JobExecution& job) {
    for (const auto& g : job.components) {
        if (g.observed()) add(g.index, make_summary_p(g));
    }
    ++runs_;
}

std::span<const SummaryNode> SummaryHistory::component(int index) const {
    const auto it = by_component_.find(index);
    if (it == by_component_.end()) return {};
    return it->second;
}

std::optional<SummaryNode> SummaryHistory::historical(int component_index, int scaleout, int beta) const {
    const auto nodes = component(component_index);
    if (nodes.empty()) return std::nullopt;
    return select_historical_summaries(nodes, scaleout, beta);
}

ContextEncoder ContextEncoder::fit(std::span<const JobExecution> jobs, std::size_t m, std::size_t epochs,
                                   double learning_rate, std::uint64_t seed) {
    std::set<PropertyValue> values;
    for (const auto& job : jobs) {
        for (const auto& p : job.properties) values.insert(p.value);
        for (const auto& g : job.components) {
            for (const auto& n : g.nodes) {
                for (const auto& p : n.properties) values.insert(p.value);
            }
        }
    }
    if (values.empty()) throw std::invalid_argument("ContextEncoder::fit: no properties to learn from");
    std::vector<PropertyVector> vectors;
    vectors.reserve(values.size());
    for (const auto& v : values) vectors.push_back(encode_property(v));
    return ContextEncoder(train_autoencoder(vectors, m, epochs, learning_rate, seed).params);
}

std::vector<double> ContextEncoder::context_vector(std::span<const Property> job_properties,
                                                   std::span<const Property> node_properties) const {
    const std::size_t n = params_.n;
    std::vector<Embedding> always, optional, node;
    for (const auto& p : job_properties) {
        auto e = embed(params_, encode_property(p.value, n));
        (p.group == PropertyGroup::optional ? optional : always).push_back(std::move(e));
    }
    for (const auto& p : node_properties) node.push_back(embed(params_, encode_property(p.value, n)));
    return build_context_vector(always, optional, node, params_.m);
}

void ContextEncoder::annotate(JobExecution& job) const {
    for (auto& g : job.components) {
        for (auto& n : g.nodes) n.context = context_vector(job.properties, n.properties);
    }
}

}  // namespace enel
