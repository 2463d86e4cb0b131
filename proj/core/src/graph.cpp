// SPDX-License-Identifier: Apache-2.0
#include "fairmib/graph.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "fairmib/errors.hpp"
#include "fairmib/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace fairmib {

namespace {

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    out.push_back(trim(cur));
    return out;
}

double parse_double(const std::string& tok, const std::string& what, size_t line_no) {
    char* end = nullptr;
    double v = std::strtod(tok.c_str(), &end);
    if (end == tok.c_str() || *end != '\0')
        throw ValidationError("line " + std::to_string(line_no) + ": cannot parse " + what +
                              " value '" + tok + "'");
    return v;
}

int parse_binary(double v, const std::string& what, size_t line_no) {
    if (v == 0.0) return 0;
    if (v == 1.0) return 1;
    throw ValidationError("line " + std::to_string(line_no) + ": " + what +
                          " must be 0 or 1, got " + std::to_string(v));
}

int cell_of(int s, int y) { return s * 2 + y; }

}  // namespace

void GraphDataset::validate() const {
    if (n <= 0) throw ValidationError("dataset has no nodes");
    if (features.rows != n) throw ValidationError("feature matrix row count differs from n");
    if (static_cast<int>(sensitive.size()) != n || static_cast<int>(labels.size()) != n)
        throw ValidationError("sensitive/label vectors must have length n");
    for (int i = 0; i < n; ++i) {
        if (sensitive[i] != 0 && sensitive[i] != 1)
            throw ValidationError("sensitive attribute of node " + std::to_string(i) +
                                  " is not binary");
        if (labels[i] != 0 && labels[i] != 1)
            throw ValidationError("label of node " + std::to_string(i) + " is not binary");
    }
    if (adjacency.rows != n || adjacency.cols != n)
        throw ValidationError("adjacency shape differs from n");
    if (adjacency.nnz() != 2 * m)
        throw ValidationError("stored adjacency entries do not match 2*m");
    // symmetry with zero diagonal, all values 1
    for (int i = 0; i < n; ++i) {
        for (int k = adjacency.row_ptr[i]; k < adjacency.row_ptr[i + 1]; ++k) {
            int j = adjacency.col_idx[k];
            if (j == i) throw ValidationError("adjacency has a self loop at node " +
                                              std::to_string(i));
            if (adjacency.values[k] != 1.0)
                throw ValidationError("adjacency stores a non-unit value");
            const int *beg = adjacency.col_idx.data() + adjacency.row_ptr[j],
                      *end = adjacency.col_idx.data() + adjacency.row_ptr[j + 1];
            if (!std::binary_search(beg, end, i))
                throw ValidationError("adjacency is not symmetric at edge (" + std::to_string(i) +
                                      "," + std::to_string(j) + ")");
        }
    }
    if (!train_mask.empty()) {
        if (train_mask.size() != static_cast<size_t>(n) || val_mask.size() != train_mask.size() ||
            test_mask.size() != train_mask.size())
            throw ValidationError("mask lengths differ from n");
        for (int i = 0; i < n; ++i)
            if (train_mask[i] + val_mask[i] + test_mask[i] > 1)
                throw ValidationError("masks overlap at node " + std::to_string(i));
    }
    if (sensitive_column_index >= 0) {
        if (sensitive_column_index >= features.cols)
            throw ValidationError("sensitive_column_index out of range");
        for (int i = 0; i < n; ++i)
            if (features(i, sensitive_column_index) != static_cast<double>(sensitive[i]))
                throw ValidationError("feature column " + std::to_string(sensitive_column_index) +
                                      " does not replicate the sensitive attribute at node " +
                                      std::to_string(i));
    }
    if (!features.all_finite()) throw ValidationError("feature matrix has non-finite entries");
}

void SplitSpec::validate() const {
    auto in01 = [](double f) { return f > 0.0 && f < 1.0; };
    if (!in01(train_fraction) || !in01(val_fraction) || !in01(test_fraction))
        throw ValidationError("split fractions must lie in (0,1)");
    double s = train_fraction + val_fraction + test_fraction;
    if (std::abs(s - 1.0) > 1e-9)
        throw ValidationError("split fractions sum to " + std::to_string(s) + ", expected 1");
}

void SynthSpec::validate() const {
    for (int c : cell_sizes)
        if (c <= 0) throw ValidationError("synthetic cell sizes must be positive");
    if (intra_cell_edge_prob < 0.0 || intra_cell_edge_prob > 1.0 ||
        cross_cell_edge_prob < 0.0 || cross_cell_edge_prob > 1.0)
        throw ValidationError("edge probabilities must lie in [0,1]");
    if (feature_dim < 2) throw ValidationError("feature_dim must be at least 2");
    if (noise_scale < 0.0) throw ValidationError("noise_scale must be non-negative");
}

GraphDataset load_dataset(const std::string& node_file, const std::string& edge_file,
                          const NodeSchema& schema) {
    std::ifstream nf(node_file);
    if (!nf) throw IoError("cannot open node file '" + node_file + "'");

    std::string header_line;
    if (!std::getline(nf, header_line))
        throw ValidationError("node file '" + node_file + "' is empty");
    const auto header = split_csv_line(header_line);

    auto col_of = [&](const std::string& name) {
        auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end())
            throw ValidationError("node file is missing required column '" + name + "'");
        return static_cast<int>(it - header.begin());
    };
    const int s_col = col_of(schema.sensitive_column);
    const int y_col = col_of(schema.label_column);

    std::vector<int> feat_cols;
    if (schema.feature_columns.empty()) {
        for (int c = 0; c < static_cast<int>(header.size()); ++c)
            if (c != s_col && c != y_col) feat_cols.push_back(c);
    } else {
        for (const auto& name : schema.feature_columns) feat_cols.push_back(col_of(name));
    }
    if (feat_cols.empty()) throw ValidationError("node file has no feature columns");

    std::vector<std::vector<double>> rows;
    std::vector<int> sens, labs;
    std::string line;
    size_t line_no = 1;
    while (std::getline(nf, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto toks = split_csv_line(line);
        if (toks.size() != header.size())
            throw ValidationError("line " + std::to_string(line_no) + ": expected " +
                                  std::to_string(header.size()) + " columns, got " +
                                  std::to_string(toks.size()));
        std::vector<double> feat;
        feat.reserve(feat_cols.size());
        for (int c : feat_cols) feat.push_back(parse_double(toks[c], header[c], line_no));
        sens.push_back(parse_binary(parse_double(toks[s_col], "sensitive", line_no), "sensitive",
                                    line_no));
        labs.push_back(parse_binary(parse_double(toks[y_col], "label", line_no), "label",
                                    line_no));
        rows.push_back(std::move(feat));
    }
    const int n = static_cast<int>(rows.size());
    if (n == 0) throw ValidationError("node file '" + node_file + "' has no data rows");

    GraphDataset g;
    g.n = n;
    g.features = Matrix(n, static_cast<int>(feat_cols.size()));
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < g.features.cols; ++j) g.features(i, j) = rows[i][j];
    g.sensitive = std::move(sens);
    g.labels = std::move(labs);
    // Record where the sensitive attribute lives inside X, if it was listed
    // as a feature column.
    for (size_t j = 0; j < feat_cols.size(); ++j)
        if (feat_cols[j] == s_col) g.sensitive_column_index = static_cast<int>(j);

    std::ifstream ef(edge_file);
    if (!ef) throw IoError("cannot open edge file '" + edge_file + "'");
    std::vector<std::pair<int, int>> edges;
    line_no = 0;
    while (std::getline(ef, line)) {
        ++line_no;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        std::istringstream ss(t);
        long long u, v;
        if (!(ss >> u >> v))
            throw ValidationError("edge file line " + std::to_string(line_no) +
                                  ": expected two integer node ids");
        std::string rest;
        if (ss >> rest)
            throw ValidationError("edge file line " + std::to_string(line_no) +
                                  ": trailing token '" + rest + "'");
        if (u < 0 || u >= n || v < 0 || v >= n)
            throw ValidationError("edge file line " + std::to_string(line_no) + ": node id " +
                                  std::to_string(u < 0 || u >= n ? u : v) + " out of range [0," +
                                  std::to_string(n - 1) + "]");
        if (u == v) continue;  // self loops dropped
        edges.emplace_back(static_cast<int>(u), static_cast<int>(v));
    }
    g.adjacency = CsrMatrix::from_edges(n, edges, /*symmetrize=*/true, /*drop_self_loops=*/true);
    g.m = g.adjacency.nnz() / 2;
    g.validate();
    return g;
}

CsrMatrix normalize_adjacency(const GraphDataset& g) {
    const CsrMatrix& a = g.adjacency;
    std::vector<double> deg(g.n, 1.0);  // self loop contributes 1
    for (int i = 0; i < g.n; ++i) deg[i] += a.row_ptr[i + 1] - a.row_ptr[i];

    CsrMatrix out;
    out.rows = g.n;
    out.cols = g.n;
    out.row_ptr.assign(static_cast<size_t>(g.n) + 1, 0);
    out.col_idx.reserve(a.nnz() + g.n);
    out.values.reserve(a.nnz() + g.n);
    for (int i = 0; i < g.n; ++i) {
        bool diag_done = false;
        const double di = deg[i];
        for (int k = a.row_ptr[i]; k < a.row_ptr[i + 1]; ++k) {
            const int j = a.col_idx[k];
            if (!diag_done && j > i) {
                out.col_idx.push_back(i);
                out.values.push_back(1.0 / di);
                diag_done = true;
            }
            out.col_idx.push_back(j);
            out.values.push_back(1.0 / std::sqrt(di * deg[j]));
        }
        if (!diag_done) {
            out.col_idx.push_back(i);
            out.values.push_back(1.0 / di);
        }
        out.row_ptr[i + 1] = static_cast<int>(out.col_idx.size());
    }
    return out;
}

GraphDataset make_splits(const GraphDataset& g, const SplitSpec& spec) {
    spec.validate();
    GraphDataset out = g;
    out.train_mask.assign(g.n, 0);
    out.val_mask.assign(g.n, 0);
    out.test_mask.assign(g.n, 0);

    std::array<std::vector<int>, 4> cells;
    for (int i = 0; i < g.n; ++i) cells[cell_of(g.sensitive[i], g.labels[i])].push_back(i);

    Rng rng(spec.seed);
    for (int c = 0; c < 4; ++c) {
        auto& members = cells[c];
        if (members.empty()) {
            std::cerr << "[fairmib] warning: (s=" << c / 2 << ", y=" << c % 2
                      << ") cell is empty; stratified split skips it\n";
            continue;
        }
        rng.shuffle(members);
        const int sz = static_cast<int>(members.size());
        int n_train = static_cast<int>(std::floor(spec.train_fraction * sz));
        if (n_train == 0) n_train = 1;  // every nonempty cell reaches training
        int n_val = static_cast<int>(std::floor(spec.val_fraction * sz));
        if (n_train + n_val > sz) n_val = sz - n_train;
        for (int k = 0; k < sz; ++k) {
            if (k < n_train)
                out.train_mask[members[k]] = 1;
            else if (k < n_train + n_val)
                out.val_mask[members[k]] = 1;
            else
                out.test_mask[members[k]] = 1;
        }
    }
    out.validate();
    return out;
}

GraphDataset gen_synthetic(const SynthSpec& spec) {
    spec.validate();
    const int n = spec.cell_sizes[0] + spec.cell_sizes[1] + spec.cell_sizes[2] +
                  spec.cell_sizes[3];
    GraphDataset g;
    g.n = n;
    g.sensitive.resize(n);
    g.labels.resize(n);
    std::vector<int> cell(n);
    {
        int idx = 0;
        for (int c = 0; c < 4; ++c)
            for (int k = 0; k < spec.cell_sizes[c]; ++k, ++idx) {
                cell[idx] = c;
                g.sensitive[idx] = c / 2;
                g.labels[idx] = c % 2;
            }
    }

    Rng rng(spec.seed);
    const int d = spec.feature_dim;
    const int d_noise = d - 1;  // last column replicates the sensitive bit
    // Disjoint direction vectors: the class signal lives in the first half of
    // the noise columns, the group signal in the second half.
    const int class_cols = (d_noise + 1) / 2;
    g.features = Matrix(n, d);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < d_noise; ++j) {
            const double class_part = (j < class_cols) ? spec.class_mean_shift * g.labels[i] : 0.0;
            const double group_part =
                (j >= class_cols) ? spec.group_mean_shift * g.sensitive[i] : 0.0;
            g.features(i, j) = class_part + group_part + spec.noise_scale * rng.normal();
        }
        g.features(i, d_noise) = static_cast<double>(g.sensitive[i]);
    }
    g.sensitive_column_index = d_noise;

    std::vector<std::pair<int, int>> edges;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            const double p =
                cell[i] == cell[j] ? spec.intra_cell_edge_prob : spec.cross_cell_edge_prob;
            if (rng.uniform() < p) edges.emplace_back(i, j);
        }
    g.adjacency = CsrMatrix::from_edges(n, edges, true, true);
    g.m = g.adjacency.nnz() / 2;
    g.validate();
    return g;
}

void save_bundle(const GraphDataset& g, const std::string& dir,
                 const std::optional<SplitSpec>& split) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory '" + dir + "': " + ec.message());

    {
        std::ofstream nf(fs::path(dir) / "nodes.csv");
        if (!nf) throw IoError("cannot write nodes.csv under '" + dir + "'");
        for (int j = 0; j < g.features.cols; ++j) nf << "f" << j << ",";
        nf << "sensitive,label\n";
        nf.precision(17);
        for (int i = 0; i < g.n; ++i) {
            for (int j = 0; j < g.features.cols; ++j) nf << g.features(i, j) << ",";
            nf << g.sensitive[i] << "," << g.labels[i] << "\n";
        }
    }
    {
        std::ofstream ef(fs::path(dir) / "edges.txt");
        if (!ef) throw IoError("cannot write edges.txt under '" + dir + "'");
        for (int i = 0; i < g.n; ++i)
            for (int k = g.adjacency.row_ptr[i]; k < g.adjacency.row_ptr[i + 1]; ++k)
                if (g.adjacency.col_idx[k] > i) ef << i << " " << g.adjacency.col_idx[k] << "\n";
    }
    {
        json meta;
        meta["n"] = g.n;
        meta["m"] = g.m;
        meta["d"] = g.features.cols;
        meta["sensitive_column_index"] = g.sensitive_column_index;
        if (split) {
            meta["split"] = {{"train_fraction", split->train_fraction},
                             {"val_fraction", split->val_fraction},
                             {"test_fraction", split->test_fraction},
                             {"seed", split->seed}};
        } else {
            meta["split"] = nullptr;
        }
        std::ofstream mf(fs::path(dir) / "meta.json");
        if (!mf) throw IoError("cannot write meta.json under '" + dir + "'");
        mf << meta.dump(2) << "\n";
    }
}

GraphDataset load_bundle(const std::string& dir) {
    const fs::path base(dir);
    if (!fs::exists(base / "meta.json"))
        throw IoError("dataset bundle '" + dir + "' is missing meta.json");

    json meta;
    {
        std::ifstream mf(base / "meta.json");
        try {
            mf >> meta;
        } catch (const json::exception& e) {
            throw ValidationError("malformed meta.json in '" + dir + "': " + e.what());
        }
    }

    NodeSchema schema;
    const int idx = meta.value("sensitive_column_index", -1);
    if (idx >= 0) {
        // Rebuild the feature column list so that the sensitive column sits at
        // the recorded position.
        const int d = meta.at("d").get<int>();
        for (int j = 0; j < d; ++j)
            schema.feature_columns.push_back(j == idx ? "sensitive" : "f" + std::to_string(j));
    }
    GraphDataset g = load_dataset((base / "nodes.csv").string(), (base / "edges.txt").string(),
                                  schema);
    if (meta.contains("n") && meta.at("n").get<int>() != g.n)
        throw ValidationError("meta.json n=" + meta.at("n").dump() + " does not match nodes.csv");
    if (meta.contains("m") && meta.at("m").get<int64_t>() != g.m)
        throw ValidationError("meta.json m does not match edges.txt");
    if (meta.contains("split") && !meta.at("split").is_null()) {
        const auto& s = meta.at("split");
        SplitSpec spec;
        spec.train_fraction = s.at("train_fraction").get<double>();
        spec.val_fraction = s.at("val_fraction").get<double>();
        spec.test_fraction = s.at("test_fraction").get<double>();
        spec.seed = s.at("seed").get<uint64_t>();
        g = make_splits(g, spec);
    }
    return g;
}

}  // namespace fairmib
