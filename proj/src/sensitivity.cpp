#include "mixedq/sensitivity.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <future>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

namespace mixedq {

const char *to_string(DecisionRule r) { return r == DecisionRule::SQNR_DIFF ? "sqnr-diff" : "sqnr-output"; }

DecisionRule rule_from_string(const std::string &s) {
    if (s == "sqnr-diff") return DecisionRule::SQNR_DIFF;
    if (s == "sqnr-output") return DecisionRule::SQNR_OUTPUT;
    throw InvalidInputError("unknown decision rule: " + s);
}

double asqnr(const std::vector<Tensor> &x_batch, const std::vector<Tensor> &q_batch) {
    if (x_batch.empty() || x_batch.size() != q_batch.size())
        throw InvalidInputError("asqnr: batches must be non-empty and of equal length");
    double ratio_sum = 0.0;
    bool infinite = false;
    for (size_t i = 0; i < x_batch.size(); ++i) {
        const Tensor &x = x_batch[i];
        const Tensor &q = q_batch[i];
        if (x.shape() != q.shape()) throw InvalidInputError("asqnr: sample shape mismatch");
        double sig = 0.0, noise = 0.0;
        for (int64_t j = 0; j < x.numel(); ++j) {
            const double d = x[j] - q[j];
            sig += x[j] * x[j];
            noise += d * d;
        }
        sig /= static_cast<double>(x.numel());
        noise /= static_cast<double>(x.numel());
        if (noise == 0.0) {
            infinite = true;
            continue;
        }
        ratio_sum += sig / noise;
    }
    if (infinite) return std::numeric_limits<double>::infinity();
    const double mean_ratio = ratio_sum / static_cast<double>(x_batch.size());
    if (mean_ratio == 0.0) return -std::numeric_limits<double>::infinity();
    return 20.0 * std::log10(mean_ratio);
}

double sqnr_capped(double v) { return std::clamp(v, -kSqnrSentinelDb, kSqnrSentinelDb); }

double sqnr_diff(double asqnr_out, double asqnr_in) { return asqnr_out - asqnr_in; }

bool SensitivityTable::complete(const std::vector<LayerId> &layers) const {
    for (const LayerId &l : layers)
        for (MethodId m : methods_for(l.kind)) {
            const bool found = std::any_of(records.begin(), records.end(), [&](const SensitivityRecord &r) {
                return r.layer.index == l.index && r.method == m;
            });
            if (!found) return false;
        }
    size_t expected = 0;
    for (const LayerId &l : layers) expected += static_cast<size_t>(method_option_count(l.kind));
    return records.size() == expected;
}

SensitivityTable analyze(Model &m, const std::vector<Tensor> &data, int max_threads) {
    if (data.empty()) throw InvalidInputError("analyze: data must be non-empty");
    if (!m.calibrated()) m.calibrate(data); // the first analysis batch doubles as PTQ calibration

    const std::vector<LayerId> layers = m.nonlinear_layers();
    const ForwardResult fp = m.forward_fp(data);

    const std::vector<MethodId> methods = {MethodId::IVIT, MethodId::IBERT, MethodId::FQVIT};
    std::vector<ForwardResult> runs(methods.size());
    auto run_one = [&](size_t i) { runs[i] = m.forward_quant(data, uniform_assignment(layers, methods[i])); };
    if (max_threads > 1) {
        std::vector<std::future<void>> futs;
        for (size_t i = 0; i < methods.size(); ++i)
            futs.push_back(std::async(std::launch::async, run_one, i));
        for (auto &f : futs) f.get();
    } else {
        for (size_t i = 0; i < methods.size(); ++i) run_one(i);
    }

    SensitivityTable table;
    for (const LayerId &l : layers) {
        for (size_t i = 0; i < methods.size(); ++i) {
            const MethodId method = methods[i];
            const auto valid = methods_for(l.kind);
            if (std::find(valid.begin(), valid.end(), method) == valid.end()) continue;
            const LayerTrace &ref = fp.trace.layers.at(l.index);
            const LayerTrace &qt = runs[i].trace.layers.at(l.index);
            SensitivityRecord rec;
            rec.layer = l;
            rec.method = method;
            rec.asqnr_in_db = sqnr_capped(asqnr(ref.inputs, qt.inputs));
            rec.asqnr_out_db = sqnr_capped(asqnr(ref.outputs, qt.outputs));
            rec.sqnr_diff_db = sqnr_diff(rec.asqnr_out_db, rec.asqnr_in_db);
            table.records.push_back(rec);
        }
    }
    return table;
}

AssignmentMap select_assignment(const SensitivityTable &t, DecisionRule rule,
                                const std::vector<LayerId> &layers) {
    if (!t.complete(layers)) throw InvalidInputError("select_assignment: incomplete sensitivity table");
    AssignmentMap out;
    for (const LayerId &l : layers) {
        bool have = false;
        double best = 0.0;
        MethodId best_m = MethodId::IBERT;
        for (MethodId m : methods_for(l.kind)) { // fixed order = tie order
            const auto it = std::find_if(t.records.begin(), t.records.end(), [&](const SensitivityRecord &r) {
                return r.layer.index == l.index && r.method == m;
            });
            const double key = rule == DecisionRule::SQNR_DIFF ? it->sqnr_diff_db : -it->asqnr_out_db;
            if (!have || key < best) {
                have = true;
                best = key;
                best_m = m;
            }
        }
        out[l.index] = best_m;
    }
    return out;
}

BigUint search_space_size(const OpCounts &counts) {
    BigUint r(1);
    for (uint64_t i = 0; i < counts.softmax; ++i) r.mul_small(3);
    for (uint64_t i = 0; i < counts.layernorm; ++i) r.mul_small(3);
    for (uint64_t i = 0; i < counts.gelu; ++i) r.mul_small(2);
    return r;
}

uint64_t evaluation_count(const OpCounts &counts) {
    return 3 * counts.softmax + 2 * counts.gelu + 3 * counts.layernorm;
}

std::string table_to_csv(const SensitivityTable &t) {
    std::ostringstream os;
    os << "layer_id,op_kind,method,asqnr_in_db,asqnr_out_db,sqnr_diff_db\n";
    char buf[64];
    for (const SensitivityRecord &r : t.records) {
        os << r.layer.render() << "," << to_string(r.layer.kind) << "," << to_string(r.method);
        std::snprintf(buf, sizeof buf, ",%.17g", r.asqnr_in_db);
        os << buf;
        std::snprintf(buf, sizeof buf, ",%.17g", r.asqnr_out_db);
        os << buf;
        std::snprintf(buf, sizeof buf, ",%.17g", r.sqnr_diff_db);
        os << buf << "\n";
    }
    return os.str();
}

SensitivityTable table_from_csv(const std::string &csv) {
    std::istringstream is(csv);
    std::string line;
    if (!std::getline(is, line) || line.rfind("layer_id,", 0) != 0)
        throw FileParseError("sensitivity csv: bad header");
    SensitivityTable t;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string field;
        std::vector<std::string> fields;
        while (std::getline(ls, field, ',')) fields.push_back(field);
        if (fields.size() != 6) throw FileParseError("sensitivity csv: bad row: " + line);
        SensitivityRecord r;
        const auto dot = fields[0].find('.');
        if (dot == std::string::npos) throw FileParseError("sensitivity csv: bad layer id: " + fields[0]);
        r.layer.index = std::stoi(fields[0].substr(0, dot));
        r.layer.kind = opkind_from_string(fields[1]);
        r.method = method_from_string(fields[2]);
        r.asqnr_in_db = std::stod(fields[3]);
        r.asqnr_out_db = std::stod(fields[4]);
        r.sqnr_diff_db = std::stod(fields[5]);
        t.records.push_back(r);
    }
    return t;
}

std::string table_to_json(const SensitivityTable &t) {
    nlohmann::json arr = nlohmann::json::array();
    for (const SensitivityRecord &r : t.records) {
        arr.push_back({{"layer_id", r.layer.render()},
                       {"op_kind", to_string(r.layer.kind)},
                       {"method", to_string(r.method)},
                       {"asqnr_in_db", r.asqnr_in_db},
                       {"asqnr_out_db", r.asqnr_out_db},
                       {"sqnr_diff_db", r.sqnr_diff_db}});
    }
    return nlohmann::json{{"records", arr}}.dump(2) + "\n";
}

std::string assignment_to_json(const AssignmentMap &a, const std::vector<LayerId> &layers) {
    nlohmann::json obj = nlohmann::json::object();
    for (const LayerId &l : layers) obj[l.render()] = to_string(a.at(l.index));
    return obj.dump(2) + "\n";
}

AssignmentMap assignment_from_json(const std::string &json_text, const std::vector<LayerId> &layers) {
    nlohmann::json obj;
    try {
        obj = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception &e) {
        throw FileParseError(std::string("assignment json: ") + e.what());
    }
    AssignmentMap a;
    for (const LayerId &l : layers) {
        const std::string key = l.render();
        if (!obj.contains(key))
            throw InvalidInputError("assignment does not cover layer " + key + " (stale layer ids?)");
        a[l.index] = method_from_string(obj[key].get<std::string>());
        if (l.kind == OpKind::GELU && a[l.index] == MethodId::FQVIT)
            throw InvalidInputError("assignment maps GELU layer " + key + " to fqvit");
    }
    if (obj.size() != layers.size())
        throw InvalidInputError("assignment has entries for unknown layers");
    return a;
}

} // namespace mixedq
