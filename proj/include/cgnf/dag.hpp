// SPDX-License-Identifier: Apache-2.0
//
// Causal DAG: node kinds, adjacency, validation, parent masks and
// deterministic topological order. The adjacency convention is row = child:
// adjacency(i, j) = 1 iff node j is a parent of node i.

#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <queue>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include "json.hpp"

#include "cgnf/common.hpp"

namespace cgnf {

enum class NodeKind { Continuous, Discrete };

struct NodeSpec {
    std::string name;
    NodeKind kind = NodeKind::Continuous;
    int n_classes = 0;  // >= 2 for discrete nodes, 0 otherwise
    int index = -1;     // position in canonical (declaration) order

    static NodeSpec continuous(std::string name) {
        return {std::move(name), NodeKind::Continuous, 0, -1};
    }
    static NodeSpec discrete(std::string name, int classes) {
        return {std::move(name), NodeKind::Discrete, classes, -1};
    }
};

class CausalDAG {
public:
    CausalDAG() = default;

    // Edges are (parent, child) name pairs. Canonical node order is the
    // declaration order; all matrices and batches use it.
    CausalDAG(std::vector<NodeSpec> nodes,
              const std::vector<std::pair<std::string, std::string>>& edges) {
        nodes_ = std::move(nodes);
        const int d = static_cast<int>(nodes_.size());
        for (int i = 0; i < d; ++i) nodes_[i].index = i;
        adjacency_ = Eigen::MatrixXi::Zero(d, d);
        for (const auto& [parent, child] : edges) {
            adjacency_(index_of(child), index_of(parent)) = 1;
        }
    }

    int size() const { return static_cast<int>(nodes_.size()); }
    const std::vector<NodeSpec>& nodes() const { return nodes_; }
    const NodeSpec& node(int i) const { check_index(i); return nodes_[i]; }
    const Eigen::MatrixXi& adjacency() const { return adjacency_; }

    int index_of(const std::string& name) const {
        for (const auto& n : nodes_)
            if (n.name == name) return n.index;
        throw UnknownNode("unknown node: " + name);
    }

    bool has_node(const std::string& name) const {
        return std::any_of(nodes_.begin(), nodes_.end(),
                           [&](const NodeSpec& n) { return n.name == name; });
    }

    // Succeeds iff names are unique, the diagonal is zero and the graph is
    // acyclic. Computes the topological order and parent lists.
    void validate() {
        const int d = size();
        for (int i = 0; i < d; ++i) {
            if (nodes_[i].kind == NodeKind::Discrete && nodes_[i].n_classes < 2)
                throw Error("discrete node " + nodes_[i].name + " needs n_classes >= 2");
            for (int j = i + 1; j < d; ++j)
                if (nodes_[i].name == nodes_[j].name)
                    throw DuplicateName("duplicate node name: " + nodes_[i].name);
            if (adjacency_(i, i) != 0)
                throw SelfLoop("self loop on node: " + nodes_[i].name);
        }
        parents_.assign(d, {});
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j)
                if (adjacency_(i, j) != 0) parents_[i].push_back(j);

        // Kahn's algorithm; ties broken by ascending node index.
        std::vector<int> remaining(d, 0);
        for (int i = 0; i < d; ++i) remaining[i] = static_cast<int>(parents_[i].size());
        std::priority_queue<int, std::vector<int>, std::greater<>> ready;
        for (int i = 0; i < d; ++i)
            if (remaining[i] == 0) ready.push(i);
        topo_.clear();
        while (!ready.empty()) {
            int u = ready.top();
            ready.pop();
            topo_.push_back(u);
            for (int i = 0; i < d; ++i)
                if (adjacency_(i, u) != 0 && --remaining[i] == 0) ready.push(i);
        }
        if (static_cast<int>(topo_.size()) != d) {
            std::string in_cycle;
            for (int i = 0; i < d; ++i)
                if (remaining[i] > 0) in_cycle += (in_cycle.empty() ? "" : ", ") + nodes_[i].name;
            throw CycleDetected("cycle through: " + in_cycle);
        }
        validated_ = true;
    }

    bool validated() const { return validated_; }

    const std::vector<int>& topological_order() const {
        require_validated();
        return topo_;
    }

    const std::vector<int>& parents(int i) const {
        require_validated();
        check_index(i);
        return parents_[i];
    }

    // mask[j] = 1 iff j is a parent of i; mask[i] = 0 always.
    Eigen::ArrayXd parent_mask(int i) const {
        require_validated();
        check_index(i);
        Eigen::ArrayXd mask = Eigen::ArrayXd::Zero(size());
        for (int j : parents_[i]) mask[j] = 1.0;
        return mask;
    }

    nlohmann::json to_json() const {
        nlohmann::json nodes = nlohmann::json::array();
        for (const auto& n : nodes_) {
            nlohmann::json jn{{"name", n.name}};
            if (n.kind == NodeKind::Discrete) {
                jn["kind"] = "discrete";
                jn["classes"] = n.n_classes;
            } else {
                jn["kind"] = "continuous";
            }
            nodes.push_back(jn);
        }
        nlohmann::json edges = nlohmann::json::array();
        for (int i = 0; i < size(); ++i)
            for (int j = 0; j < size(); ++j)
                if (adjacency_(i, j) != 0)
                    edges.push_back({nodes_[j].name, nodes_[i].name});
        return {{"nodes", nodes}, {"edges", edges}};
    }

    // Expects {"nodes":[{"name","kind","classes"?}...], "edges":[[parent,child]...]}.
    static CausalDAG from_json(const nlohmann::json& j) {
        std::vector<NodeSpec> nodes;
        for (const auto& jn : j.at("nodes")) {
            std::string kind = jn.value("kind", "continuous");
            if (kind == "discrete")
                nodes.push_back(NodeSpec::discrete(jn.at("name"), jn.at("classes")));
            else
                nodes.push_back(NodeSpec::continuous(jn.at("name")));
        }
        std::vector<std::pair<std::string, std::string>> edges;
        for (const auto& je : j.value("edges", nlohmann::json::array()))
            edges.emplace_back(je.at(0).get<std::string>(), je.at(1).get<std::string>());
        CausalDAG dag(std::move(nodes), edges);
        dag.validate();
        return dag;
    }

private:
    void check_index(int i) const {
        if (i < 0 || i >= size())
            throw IndexOutOfRange("node index " + std::to_string(i) + " out of range");
    }
    void require_validated() const {
        if (!validated_) throw Error("DAG not validated");
    }

    std::vector<NodeSpec> nodes_;
    Eigen::MatrixXi adjacency_;
    std::vector<std::vector<int>> parents_;
    std::vector<int> topo_;
    bool validated_ = false;
};

// The 2-wave graph: C1 -> {A1, C2, Y}, A1 -> {C2, A2, Y}, C2 -> {A2, Y},
// A2 -> Y. Binary treatments, continuous covariates and outcome.
inline CausalDAG two_wave_dag() {
    CausalDAG dag({NodeSpec::continuous("C1"), NodeSpec::discrete("A1", 2),
                   NodeSpec::continuous("C2"), NodeSpec::discrete("A2", 2),
                   NodeSpec::continuous("Y")},
                  {{"C1", "A1"}, {"C1", "C2"}, {"C1", "Y"},
                   {"A1", "C2"}, {"A1", "A2"}, {"A1", "Y"},
                   {"C2", "A2"}, {"C2", "Y"},
                   {"A2", "Y"}});
    dag.validate();
    return dag;
}

}  // namespace cgnf
