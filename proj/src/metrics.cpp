#include "razor/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include <json.hpp>

#include "razor/errors.hpp"

namespace razor {

namespace {

std::vector<Tensor> embed_prompts(FrozenEncoder& enc, const std::vector<Tensor>& prompt_bank) {
    std::vector<Tensor> out;
    out.reserve(prompt_bank.size());
    for (const Tensor& p : prompt_bank) out.push_back(enc.text(p));
    return out;
}

std::vector<double> prompt_sims(FrozenEncoder& enc, const Tensor& image,
                                const std::vector<Tensor>& prompt_embeds) {
    Tensor v = enc.image(image);
    std::vector<double> sims;
    sims.reserve(prompt_embeds.size());
    for (const Tensor& t : prompt_embeds) sims.push_back(seq_dot(v.data, t.data));
    return sims;
}

}  // namespace

double m1_forget_accuracy(const Checkpoint& c, const std::vector<Pair>& forget_split,
                          const std::vector<Tensor>& prompt_bank) {
    if (forget_split.empty()) throw InputError("m1: empty forget split");
    if (prompt_bank.empty()) throw InputError("m1: empty prompt bank");
    FrozenEncoder enc(c);
    std::vector<Tensor> pe = embed_prompts(enc, prompt_bank);
    int hits = 0;
    for (const Pair& p : forget_split) {
        std::vector<double> sims = prompt_sims(enc, p.image, pe);
        double own = sims[p.class_id];
        double best_other = -2.0;
        for (size_t j = 0; j < sims.size(); ++j)
            if (static_cast<int>(j) != p.class_id) best_other = std::max(best_other, sims[j]);
        // ties count toward the forget class (pessimistic)
        if (own >= best_other) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(forget_split.size());
}

double m2_forget_cosine(const Checkpoint& c, const std::vector<Pair>& forget_split) {
    if (forget_split.empty()) throw InputError("m2: empty forget split");
    FrozenEncoder enc(c);
    double s = 0.0;
    for (const Pair& p : forget_split) {
        Tensor v = enc.image(p.image);
        Tensor t = enc.text(p.tokens);
        s += seq_dot(v.data, t.data);
    }
    return s / static_cast<double>(forget_split.size());
}

double m3_privleak(const Checkpoint& before, const Checkpoint& after,
                   const std::vector<Pair>& probe_split) {
    if (!(before.config == after.config))
        throw ContractError("m3: checkpoints have different configs");
    if (probe_split.empty()) throw InputError("m3: empty probe split");
    FrozenEncoder enc_b(before);
    FrozenEncoder enc_a(after);
    double s = 0.0;
    for (const Pair& p : probe_split) {
        double sb = seq_dot(enc_b.image(p.image).data, enc_b.text(p.tokens).data);
        double sa = seq_dot(enc_a.image(p.image).data, enc_a.text(p.tokens).data);
        s += (sa - sb) * (sa - sb);
    }
    return s / static_cast<double>(probe_split.size());
}

double m4_retain_accuracy(const Checkpoint& c, const std::vector<Pair>& retain_split,
                          const std::vector<Tensor>& prompt_bank) {
    if (retain_split.empty()) throw InputError("m4: empty retain split");
    if (prompt_bank.empty()) throw InputError("m4: empty prompt bank");
    FrozenEncoder enc(c);
    std::vector<Tensor> pe = embed_prompts(enc, prompt_bank);
    int hits = 0;
    for (const Pair& p : retain_split) {
        std::vector<double> sims = prompt_sims(enc, p.image, pe);
        size_t arg = 0;
        for (size_t j = 1; j < sims.size(); ++j)
            if (sims[j] > sims[arg]) arg = j;
        if (static_cast<int>(arg) == p.class_id) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(retain_split.size());
}

double retrieval_utility(const Checkpoint& c, const std::vector<Pair>& retain_split,
                         const std::vector<Tensor>& prompt_bank) {
    if (retain_split.empty()) throw InputError("utility: empty retain split");
    // Caption bank: the prompt templates of classes present in the split.
    std::vector<int> classes;
    for (const Pair& p : retain_split)
        if (std::find(classes.begin(), classes.end(), p.class_id) == classes.end())
            classes.push_back(p.class_id);
    std::sort(classes.begin(), classes.end());
    FrozenEncoder enc(c);
    std::vector<Tensor> caps;
    for (int cl : classes) caps.push_back(enc.text(prompt_bank.at(cl)));
    int hits = 0;
    for (const Pair& p : retain_split) {
        Tensor v = enc.image(p.image);
        size_t arg = 0;
        double best = seq_dot(v.data, caps[0].data);
        for (size_t j = 1; j < caps.size(); ++j) {
            double s = seq_dot(v.data, caps[j].data);
            if (s > best) {
                best = s;
                arg = j;
            }
        }
        if (classes[arg] == p.class_id) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(retain_split.size());
}

double m5_stability(double util_before, double util_after) {
    return std::clamp(1.0 - std::abs(util_after - util_before), 0.0, 1.0);
}

MetricsReport evaluate_all(const Checkpoint& before, const Checkpoint& after,
                           const EvalSplits& splits, const std::string& checkpoint_tag,
                           const std::string& precision_tag) {
    MetricsReport r;
    r.m1 = m1_forget_accuracy(after, splits.forget, splits.prompt_bank);
    r.m2 = m2_forget_cosine(after, splits.forget);
    r.m3 = m3_privleak(before, after, splits.retain_probe);
    r.m3_forget_diag = m3_privleak(before, after, splits.forget);
    r.m4 = m4_retain_accuracy(after, splits.retain, splits.prompt_bank);
    r.util_before = retrieval_utility(before, splits.retain, splits.prompt_bank);
    r.util_after = retrieval_utility(after, splits.retain, splits.prompt_bank);
    r.m5 = m5_stability(r.util_before, r.util_after);
    r.split_id = splits.split_id;
    r.checkpoint_tag = checkpoint_tag;
    r.precision_tag = precision_tag;
    return r;
}

std::string MetricsReport::to_json() const {
    nlohmann::json j;
    j["m1"] = m1;
    j["m2"] = m2;
    j["m3"] = m3;
    j["m4"] = m4;
    j["m5"] = m5;
    j["m3_forget_diag"] = m3_forget_diag;
    j["util_before"] = util_before;
    j["util_after"] = util_after;
    j["split_id"] = split_id;
    j["checkpoint_tag"] = checkpoint_tag;
    j["precision_tag"] = precision_tag;
    return j.dump();
}

MetricsReport MetricsReport::from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    MetricsReport r;
    r.m1 = j.at("m1");
    r.m2 = j.at("m2");
    r.m3 = j.at("m3");
    r.m4 = j.at("m4");
    r.m5 = j.at("m5");
    r.m3_forget_diag = j.at("m3_forget_diag");
    r.util_before = j.at("util_before");
    r.util_after = j.at("util_after");
    r.split_id = j.at("split_id");
    r.checkpoint_tag = j.at("checkpoint_tag");
    r.precision_tag = j.at("precision_tag");
    return r;
}

void write_metrics_csv_header(std::ostream& os) {
    os << "scenario,precision,m1,m2,m3,m4,m5,m1_pct,m2_pct,m3_pct,m4_pct,m5_pct\n";
}

void write_metrics_csv_row(std::ostream& os, const std::string& scenario,
                           const MetricsReport& r) {
    os << scenario << "," << r.precision_tag << "," << r.m1 << "," << r.m2 << "," << r.m3 << ","
       << r.m4 << "," << r.m5 << "," << 100.0 * r.m1 << "," << 100.0 * r.m2 << ","
       << 100.0 * r.m3 << "," << 100.0 * r.m4 << "," << 100.0 * r.m5 << "\n";
}

}  // namespace razor
