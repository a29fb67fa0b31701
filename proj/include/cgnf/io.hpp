// SPDX-License-Identifier: Apache-2.0
//
// SampleBatch (column-named sample matrix) and CSV/JSON file helpers.
// Doubles are written with shortest round-trip formatting so that identical
// inputs produce byte-identical files.

#pragma once

#include <charconv>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include "json.hpp"

#include "cgnf/common.hpp"
#include "cgnf/dag.hpp"

namespace cgnf {

// n x d real matrix with named columns; rows are samples, columns follow the
// DAG's canonical node order when the batch is DAG-aligned.
struct SampleBatch {
    std::vector<std::string> names;
    Eigen::MatrixXd values;

    int rows() const { return static_cast<int>(values.rows()); }
    int cols() const { return static_cast<int>(values.cols()); }

    int column_index(const std::string& name) const {
        for (std::size_t i = 0; i < names.size(); ++i)
            if (names[i] == name) return static_cast<int>(i);
        throw UnknownNode("no column named " + name);
    }

    Eigen::VectorXd col(const std::string& name) const {
        return values.col(column_index(name));
    }
};

inline std::string format_double(double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline void write_csv(const SampleBatch& batch, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path);
    for (std::size_t j = 0; j < batch.names.size(); ++j)
        out << (j ? "," : "") << batch.names[j];
    out << "\n";
    for (int i = 0; i < batch.rows(); ++i) {
        for (int j = 0; j < batch.cols(); ++j)
            out << (j ? "," : "") << format_double(batch.values(i, j));
        out << "\n";
    }
}

inline SampleBatch read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open for reading: " + path);
    std::string line;
    if (!std::getline(in, line)) throw IoError("empty CSV: " + path);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    SampleBatch batch;
    {
        std::stringstream header(line);
        std::string field;
        while (std::getline(header, field, ',')) batch.names.push_back(field);
    }
    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string field;
        std::vector<double> row;
        while (std::getline(ss, field, ',')) row.push_back(std::stod(field));
        if (row.size() != batch.names.size())
            throw IoError("ragged CSV row in " + path);
        rows.push_back(std::move(row));
    }
    batch.values.resize(static_cast<int>(rows.size()),
                        static_cast<int>(batch.names.size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows[i].size(); ++j)
            batch.values(static_cast<int>(i), static_cast<int>(j)) = rows[i][j];
    return batch;
}

inline void write_json_file(const nlohmann::json& j, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << j.dump(2) << "\n";
}

inline nlohmann::json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open for reading: " + path);
    return nlohmann::json::parse(in);
}

}  // namespace cgnf
