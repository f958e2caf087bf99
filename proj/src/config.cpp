#include "razor/config.hpp"

#include <fstream>
#include <sstream>

#include "razor/errors.hpp"

namespace razor {

namespace {

std::string trim(std::string s) {
    s.erase(0, s.find_first_not_of(" \t\r"));
    s.erase(s.find_last_not_of(" \t\r") + 1);
    return s;
}

int to_int(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        int x = std::stoi(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw ConfigError("config: bad integer for " + key + ": '" + v + "'");
    }
}

uint64_t to_u64(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        uint64_t x = std::stoull(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw ConfigError("config: bad unsigned integer for " + key + ": '" + v + "'");
    }
}

double to_double(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        double x = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw ConfigError("config: bad number for " + key + ": '" + v + "'");
    }
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("config: bad boolean for " + key + ": '" + v + "'");
}

std::vector<int> to_int_list(const std::string& key, const std::string& v) {
    std::vector<int> out;
    std::istringstream is(v);
    std::string item;
    while (std::getline(is, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(to_int(key, item));
    }
    if (out.empty()) throw ConfigError("config: empty list for " + key);
    return out;
}

void apply(RunConfig& c, const std::string& key, const std::string& v) {
    if (key == "model.embed_dim") c.model.embed_dim = to_int(key, v);
    else if (key == "model.n_blocks") c.model.n_blocks = to_int(key, v);
    else if (key == "model.n_heads") c.model.n_heads = to_int(key, v);
    else if (key == "model.mlp_hidden") c.model.mlp_hidden = to_int(key, v);
    else if (key == "model.vocab_size") c.model.vocab_size = to_int(key, v);
    else if (key == "model.n_patches") c.model.n_patches = to_int(key, v);
    else if (key == "model.patch_dim") c.model.patch_dim = to_int(key, v);
    else if (key == "model.max_text_len") c.model.max_text_len = to_int(key, v);
    else if (key == "data.n_classes") c.split.n_classes = to_int(key, v);
    else if (key == "data.forget_classes") c.split.forget_classes = to_int_list(key, v);
    else if (key == "data.pairs_per_class") c.split.pairs_per_class = to_int(key, v);
    else if (key == "data.noise_sigma") c.split.noise_sigma = to_double(key, v);
    else if (key == "data.val_fraction") c.split.val_fraction = to_double(key, v);
    else if (key == "razor.rho") c.razor.weights.rho = to_double(key, v);
    else if (key == "razor.lambda_f") c.razor.weights.lambda_f = to_double(key, v);
    else if (key == "razor.lambda_m") c.razor.weights.lambda_m = to_double(key, v);
    else if (key == "razor.temperature") c.razor.weights.temperature = to_double(key, v);
    else if (key == "razor.alpha") c.razor.alpha = to_double(key, v);
    else if (key == "razor.eps") c.razor.eps = to_double(key, v);
    else if (key == "razor.tau_percentile") c.razor.tau_percentile = to_double(key, v);
    else if (key == "razor.t_max") c.razor.t_max = to_int(key, v);
    else if (key == "razor.lambda_init") c.razor.lambda_init = to_double(key, v);
    else if (key == "razor.delta") c.razor.delta = to_double(key, v);
    else if (key == "razor.saliency_variant") {
        if (v == "eq2") c.razor.saliency_variant = SaliencyVariant::eq2;
        else if (v == "squared") c.razor.saliency_variant = SaliencyVariant::appendix_squared;
        else throw ConfigError("config: razor.saliency_variant must be eq2 or squared");
    } else if (key == "razor.mismatch_variant") {
        if (v == "signed") c.razor.mismatch_form = MismatchForm::signed_drift;
        else if (v == "squared") c.razor.mismatch_form = MismatchForm::squared_drift;
        else throw ConfigError("config: razor.mismatch_variant must be signed or squared");
    } else if (key == "razor.use_retain") c.razor.ablation.use_retain = to_bool(key, v);
    else if (key == "razor.use_forget") c.razor.ablation.use_forget = to_bool(key, v);
    else if (key == "razor.use_mismatch") c.razor.ablation.use_mismatch = to_bool(key, v);
    else if (key == "razor.select_all") c.razor.select_all = to_bool(key, v);
    else if (key == "razor.iterate") c.razor.iterate = to_bool(key, v);
    else if (key == "target.m1_max") c.razor.target.m1_max = to_double(key, v);
    else if (key == "target.m3_max") c.razor.target.m3_max = to_double(key, v);
    else if (key == "target.m4_min_frac") c.razor.target.m4_min_frac = to_double(key, v);
    else if (key == "target.m5_min") c.razor.target.m5_min = to_double(key, v);
    else if (key == "pretrain.steps") c.pretrain.steps = to_int(key, v);
    else if (key == "pretrain.step_size") c.pretrain.step_size = to_double(key, v);
    else if (key == "pretrain.batch_size") c.pretrain.batch_size = to_int(key, v);
    else if (key == "pretrain.momentum") c.pretrain.momentum = to_double(key, v);
    else if (key == "pretrain.warmup_steps") c.pretrain.warmup_steps = to_int(key, v);
    else if (key == "pretrain.clip_norm") c.pretrain.clip_norm = to_double(key, v);
    else if (key == "seed") c.seed = to_u64(key, v);
    else if (key == "output_dir") c.output_dir = v;
    else throw ConfigError("config: unknown key '" + key + "'");
}

}  // namespace

void RunConfig::validate() const {
    model.validate();
    split.validate();
    razor.validate();
    pretrain.validate();
    if (output_dir.empty()) throw ConfigError("config: output_dir must not be empty");
}

RunConfig parse_run_config(const std::string& text) {
    RunConfig c;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config: line " + std::to_string(lineno) + " is not 'key = value'");
        apply(c, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    c.validate();
    return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw InputError("cannot open config file: " + path.string());
    std::ostringstream os;
    os << f.rdbuf();
    return parse_run_config(os.str());
}

std::string render_run_config(const RunConfig& c) {
    std::ostringstream os;
    os.precision(17);
    os << "model.embed_dim = " << c.model.embed_dim << "\n"
       << "model.n_blocks = " << c.model.n_blocks << "\n"
       << "model.n_heads = " << c.model.n_heads << "\n"
       << "model.mlp_hidden = " << c.model.mlp_hidden << "\n"
       << "model.vocab_size = " << c.model.vocab_size << "\n"
       << "model.n_patches = " << c.model.n_patches << "\n"
       << "model.patch_dim = " << c.model.patch_dim << "\n"
       << "model.max_text_len = " << c.model.max_text_len << "\n"
       << "data.n_classes = " << c.split.n_classes << "\n"
       << "data.forget_classes = ";
    for (size_t i = 0; i < c.split.forget_classes.size(); ++i)
        os << (i ? "," : "") << c.split.forget_classes[i];
    os << "\n"
       << "data.pairs_per_class = " << c.split.pairs_per_class << "\n"
       << "data.noise_sigma = " << c.split.noise_sigma << "\n"
       << "data.val_fraction = " << c.split.val_fraction << "\n"
       << "razor.rho = " << c.razor.weights.rho << "\n"
       << "razor.lambda_f = " << c.razor.weights.lambda_f << "\n"
       << "razor.lambda_m = " << c.razor.weights.lambda_m << "\n"
       << "razor.temperature = " << c.razor.weights.temperature << "\n"
       << "razor.alpha = " << c.razor.alpha << "\n"
       << "razor.eps = " << c.razor.eps << "\n"
       << "razor.tau_percentile = " << c.razor.tau_percentile << "\n"
       << "razor.t_max = " << c.razor.t_max << "\n"
       << "razor.lambda_init = " << c.razor.lambda_init << "\n"
       << "razor.delta = " << c.razor.delta << "\n"
       << "razor.saliency_variant = "
       << (c.razor.saliency_variant == SaliencyVariant::eq2 ? "eq2" : "squared") << "\n"
       << "razor.mismatch_variant = "
       << (c.razor.mismatch_form == MismatchForm::signed_drift ? "signed" : "squared") << "\n"
       << "razor.use_retain = " << (c.razor.ablation.use_retain ? "true" : "false") << "\n"
       << "razor.use_forget = " << (c.razor.ablation.use_forget ? "true" : "false") << "\n"
       << "razor.use_mismatch = " << (c.razor.ablation.use_mismatch ? "true" : "false") << "\n"
       << "razor.select_all = " << (c.razor.select_all ? "true" : "false") << "\n"
       << "razor.iterate = " << (c.razor.iterate ? "true" : "false") << "\n"
       << "target.m1_max = " << c.razor.target.m1_max << "\n"
       << "target.m3_max = " << c.razor.target.m3_max << "\n"
       << "target.m4_min_frac = " << c.razor.target.m4_min_frac << "\n"
       << "target.m5_min = " << c.razor.target.m5_min << "\n"
       << "pretrain.steps = " << c.pretrain.steps << "\n"
       << "pretrain.step_size = " << c.pretrain.step_size << "\n"
       << "pretrain.batch_size = " << c.pretrain.batch_size << "\n"
       << "pretrain.momentum = " << c.pretrain.momentum << "\n"
       << "pretrain.warmup_steps = " << c.pretrain.warmup_steps << "\n"
       << "pretrain.clip_norm = " << c.pretrain.clip_norm << "\n"
       << "seed = " << c.seed << "\n"
       << "output_dir = " << c.output_dir << "\n";
    return os.str();
}

}  // namespace razor
