#include "flowcot/toyworld.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>

#include <json.hpp>

#include "flowcot/errors.hpp"
#include "flowcot/numeric.hpp"

namespace flowcot {

using nlohmann::json;

JointModel::JointModel(Vocabulary vocab, int order) : vocab_(vocab), order_(order) {
    vocab_.validate();
    if (order_ < 1) throw DataError("JointModel: order must be >= 1");
}

std::string JointModel::context_key(std::span<const int> context) {
    std::string key;
    for (std::size_t i = 0; i < context.size(); ++i) {
        if (i) key += ',';
        key += std::to_string(context[i]);
    }
    return key;
}

void JointModel::set_row(std::span<const int> context, std::vector<double> probs) {
    if (static_cast<int>(context.size()) != order_)
        throw DataError("set_row: context length != order");
    if (static_cast<int>(probs.size()) != vocab_.size + 1)
        throw DataError("set_row: row length != V+1");
    tables_[context_key(context)] = std::move(probs);
}

void JointModel::validate_rows() const {
    for (const auto& [key, row] : tables_) {
        if (static_cast<int>(row.size()) != vocab_.size + 1)
            throw DataError("JointModel row '" + key + "': wrong length");
        double sum = 0.0;
        for (double p : row) {
            if (!(p > 0.0)) throw DataError("JointModel row '" + key + "': non-positive entry");
            sum += p;
        }
        if (std::abs(sum - 1.0) > 1e-12)
            throw DataError("JointModel row '" + key + "': sums to " + std::to_string(sum));
    }
}

const std::vector<double>& JointModel::row(std::span<const int> context) const {
    // left-pad to exactly k symbols
    std::vector<int> padded(static_cast<std::size_t>(order_), vocab_.pad_id());
    const std::size_t n = context.size();
    const std::size_t take = std::min<std::size_t>(n, static_cast<std::size_t>(order_));
    for (std::size_t i = 0; i < take; ++i)
        padded[order_ - take + i] = context[n - take + i];
    auto it = tables_.find(context_key(padded));
    if (it == tables_.end())
        throw DataError("JointModel: unknown context '" + context_key(padded) +
                        "' (corrupt model file?)");
    return it->second;
}

double JointModel::conditional_logprob(std::span<const int> context, int symbol) const {
    if (symbol < 0 || symbol > vocab_.size)
        throw DataError("conditional_logprob: symbol id out of range");
    return std::log(row(context)[symbol]);
}

std::vector<int> JointModel::joint_symbols(const Vocabulary& vocab, const Sequence& x,
                                           const Sequence& z, const Sequence& y) {
    std::vector<int> symbols;
    symbols.reserve(x.tokens.size() + z.tokens.size() + 1 + y.tokens.size());
    symbols.insert(symbols.end(), x.tokens.begin(), x.tokens.end());
    symbols.insert(symbols.end(), z.tokens.begin(), z.tokens.end());
    symbols.push_back(vocab.terminal_id());
    symbols.insert(symbols.end(), y.tokens.begin(), y.tokens.end());
    return symbols;
}

double JointModel::log_joint(const Sequence& x, const Sequence& z, const Sequence& y) const {
    x.validate(vocab_);
    z.validate(vocab_);
    y.validate(vocab_);
    const auto symbols = joint_symbols(vocab_, x, z, y);
    double total = 0.0;
    for (std::size_t i = 0; i < symbols.size(); ++i)
        total += conditional_logprob(std::span(symbols).first(i), symbols[i]);
    return total;
}

std::vector<int> JointModel::sample_continuation(std::span<const int> prefix, int max_len,
                                                 Rng& rng) const {
    if (max_len < 1) throw DataError("sample_continuation: max_len must be >= 1");
    std::vector<int> context(prefix.begin(), prefix.end());
    std::vector<int> out;
    for (int step = 0; step < max_len; ++step) {
        const auto& r = row(context);
        const auto idx = static_cast<int>(rng.categorical(r));
        if (idx == vocab_.terminal_id()) break;
        out.push_back(idx);
        context.push_back(idx);
    }
    return out;
}

std::vector<int> JointModel::sample_tokens(std::span<const int> prefix, int len, Rng& rng) const {
    std::vector<int> context(prefix.begin(), prefix.end());
    std::vector<int> out;
    for (int step = 0; step < len; ++step) {
        auto r = row(context);  // copy; terminal masked
        r[vocab_.terminal_id()] = 0.0;
        const auto idx = static_cast<int>(rng.categorical(r));
        out.push_back(idx);
        context.push_back(idx);
    }
    return out;
}

std::vector<int> JointModel::greedy_continuation(std::span<const int> prefix, int min_len,
                                                 int max_len) const {
    std::vector<int> context(prefix.begin(), prefix.end());
    std::vector<int> out;
    while (static_cast<int>(out.size()) < max_len) {
        auto r = row(context);
        if (static_cast<int>(out.size()) < min_len) r[vocab_.terminal_id()] = 0.0;
        const auto idx =
            static_cast<int>(std::max_element(r.begin(), r.end()) - r.begin());
        if (idx == vocab_.terminal_id()) break;
        out.push_back(idx);
        context.push_back(idx);
    }
    return out;
}

void WorldSpec::validate() const {
    if (vocab_size < 2) throw DataError("WorldSpec: vocab_size must be >= 2");
    if (order < 1) throw DataError("WorldSpec: order must be >= 1");
    if (!uniform_rows && !(concentration > 0.0))
        throw DataError("WorldSpec: concentration must be > 0");
    if (num_instances < 0) throw DataError("WorldSpec: num_instances must be >= 0");
    auto bounds = [](int lo, int hi, const char* what) {
        if (lo < 0 || hi < lo) throw DataError(std::string("WorldSpec: bad ") + what + " bounds");
    };
    bounds(x_len_min, x_len_max, "x length");
    bounds(y_len_min, y_len_max, "y length");
    bounds(min_rationale_len, max_rationale_len, "rationale length");
    if (x_len_min < 1 || y_len_min < 1)
        throw DataError("WorldSpec: x and y must be non-empty");
}

namespace {

void enumerate_contexts(int alphabet, int order, std::vector<int>& scratch,
                        const std::function<void(std::span<const int>)>& fn) {
    if (static_cast<int>(scratch.size()) == order) {
        fn(scratch);
        return;
    }
    for (int s = 0; s < alphabet; ++s) {
        scratch.push_back(s);
        enumerate_contexts(alphabet, order, scratch, fn);
        scratch.pop_back();
    }
}

}  // namespace

World make_world(const WorldSpec& spec, std::uint64_t seed) {
    spec.validate();
    Vocabulary vocab{spec.vocab_size};
    JointModel model(vocab, spec.order);

    const int n_symbols = spec.vocab_size + 1;  // row width: tokens + terminal
    Rng row_rng(stream_seed(seed, "world-rows"));
    std::vector<int> scratch;
    enumerate_contexts(spec.vocab_size + 2, spec.order, scratch, [&](std::span<const int> ctx) {
        std::vector<double> probs;
        if (spec.uniform_rows) {
            probs.assign(n_symbols, 1.0 / n_symbols);
        } else {
            probs = row_rng.next_dirichlet(n_symbols, spec.concentration);
            // strictly positive support so every log-reward is finite
            double sum = 0.0;
            for (auto& p : probs) {
                p = std::max(p, 1e-6);
                sum += p;
            }
            for (auto& p : probs) p /= sum;
        }
        model.set_row(ctx, std::move(probs));
    });
    model.validate_rows();

    std::vector<Instance> instances;
    instances.reserve(spec.num_instances);
    for (int i = 0; i < spec.num_instances; ++i) {
        Rng rng(stream_seed(seed, "world-instance", static_cast<std::uint64_t>(i)));
        Instance inst;
        const int x_len = rng.next_int(spec.x_len_min, spec.x_len_max);
        inst.x = make_sequence(model.sample_tokens({}, x_len, rng), Role::Question);
        inst.z_ref = make_sequence(
            model.greedy_continuation(inst.x.tokens, spec.min_rationale_len,
                                      spec.max_rationale_len),
            Role::Rationale);
        std::vector<int> ctx = inst.x.tokens;
        ctx.insert(ctx.end(), inst.z_ref.tokens.begin(), inst.z_ref.tokens.end());
        ctx.push_back(vocab.terminal_id());
        const int y_len = rng.next_int(spec.y_len_min, spec.y_len_max);
        inst.y = make_sequence(model.sample_tokens(ctx, y_len, rng), Role::Answer);
        instances.push_back(std::move(inst));
    }
    return World{std::move(model), std::move(instances)};
}

std::map<std::vector<int>, double> exact_posterior(const JointModel& model, const Sequence& x,
                                                   const Sequence& y, int max_len,
                                                   std::uint64_t cap) {
    const int v = model.vocab().size;
    std::uint64_t count = 0;
    std::uint64_t level = 1;
    for (int l = 0; l <= max_len; ++l) {
        count += level;
        if (count > cap)
            throw EnumerationCapError("exact_posterior: " + std::to_string(count) +
                                      " rationales exceed cap " + std::to_string(cap));
        level *= static_cast<std::uint64_t>(v);
    }

    std::vector<std::vector<int>> rationales;
    rationales.reserve(count);
    std::vector<int> current;
    const std::function<void()> rec = [&]() {
        rationales.push_back(current);
        if (static_cast<int>(current.size()) == max_len) return;
        for (int t = 0; t < v; ++t) {
            current.push_back(t);
            rec();
            current.pop_back();
        }
    };
    rec();

    std::vector<double> log_weights(rationales.size());
    for (std::size_t i = 0; i < rationales.size(); ++i) {
        const Sequence z = make_sequence(rationales[i], Role::Rationale);
        log_weights[i] = model.log_joint(x, z, y);
    }
    const double lse = log_sum_exp(log_weights);

    std::map<std::vector<int>, double> posterior;
    for (std::size_t i = 0; i < rationales.size(); ++i)
        posterior[rationales[i]] = std::exp(log_weights[i] - lse);
    return posterior;
}

namespace {

json instance_to_json(const Instance& inst) {
    return json{{"x", inst.x.tokens}, {"y", inst.y.tokens}, {"z_ref", inst.z_ref.tokens}};
}

Instance instance_from_json(const json& j) {
    Instance inst;
    inst.x = make_sequence(j.at("x").get<std::vector<int>>(), Role::Question);
    inst.y = make_sequence(j.at("y").get<std::vector<int>>(), Role::Answer);
    inst.z_ref = make_sequence(j.at("z_ref").get<std::vector<int>>(), Role::Rationale);
    return inst;
}

}  // namespace

void save_world(const World& world, const std::string& path) {
    json tables = json::object();
    for (const auto& [key, row] : world.model.tables()) tables[key] = row;
    json instances = json::array();
    for (const auto& inst : world.instances) instances.push_back(instance_to_json(inst));
    const json doc{{"version", 1},
                   {"vocab_size", world.model.vocab().size},
                   {"order", world.model.order()},
                   {"tables", tables},
                   {"instances", instances}};
    std::ofstream out(path);
    if (!out) throw DataError("save_world: cannot open '" + path + "'");
    out << doc.dump(2) << '\n';
}

World load_world(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("load_world: cannot open '" + path + "'");
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw DataError("load_world: invalid JSON in '" + path + "': " + e.what());
    }
    if (!doc.contains("version") || doc["version"].get<int>() != 1)
        throw DataError("load_world: unsupported world file version");

    Vocabulary vocab{doc.at("vocab_size").get<int>()};
    JointModel model(vocab, doc.at("order").get<int>());
    for (const auto& [key, row] : doc.at("tables").items()) {
        std::vector<int> ctx;
        std::size_t pos = 0;
        const std::string& s = key;
        while (pos < s.size()) {
            std::size_t next = s.find(',', pos);
            if (next == std::string::npos) next = s.size();
            ctx.push_back(std::stoi(s.substr(pos, next - pos)));
            pos = next + 1;
        }
        model.set_row(ctx, row.get<std::vector<double>>());
    }
    model.validate_rows();

    std::vector<Instance> instances;
    for (const auto& j : doc.at("instances")) {
        Instance inst = instance_from_json(j);
        inst.x.validate(vocab);
        inst.y.validate(vocab);
        inst.z_ref.validate(vocab);
        instances.push_back(std::move(inst));
    }
    return World{std::move(model), std::move(instances)};
}

}  // namespace flowcot
