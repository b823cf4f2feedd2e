#include "fltrust/data.hpp"

#include <algorithm>
#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>

namespace fltrust {

void Dataset::validate() const {
    if (input_dim < 1) throw config_error("Dataset: input_dim must be positive");
    if (num_classes < 1) throw config_error("Dataset: num_classes must be positive");
    for (std::size_t i = 0; i < examples.size(); ++i) {
        const Example& ex = examples[i];
        if (static_cast<int>(ex.features.size()) != input_dim)
            throw config_error("Dataset: example " + std::to_string(i) + " has " +
                               std::to_string(ex.features.size()) + " features, expected " +
                               std::to_string(input_dim));
        if (ex.label < 0 || ex.label >= num_classes)
            throw config_error("Dataset: example " + std::to_string(i) + " label " +
                               std::to_string(ex.label) + " outside [0, " +
                               std::to_string(num_classes) + ")");
    }
}

void TriggerSpec::validate(int input_dim, int num_classes) const {
    if (indices.size() != values.size())
        throw config_error("trigger: " + std::to_string(indices.size()) + " indices but " +
                           std::to_string(values.size()) + " values");
    for (int idx : indices)
        if (idx < 0 || idx >= input_dim)
            throw config_error("trigger: feature index " + std::to_string(idx) +
                               " outside [0, " + std::to_string(input_dim) + ")");
    if (target_label < 0 || target_label >= num_classes)
        throw config_error("trigger: target_label " + std::to_string(target_label) +
                           " outside [0, " + std::to_string(num_classes) + ")");
}

TriggerSpec TriggerSpec::every_kth(int input_dim, int k, double value, int target_label) {
    if (k < 1) throw config_error("trigger: every_kth stride must be positive");
    TriggerSpec t;
    for (int i = 0; i < input_dim; i += k) {
        t.indices.push_back(i);
        t.values.push_back(value);
    }
    t.target_label = target_label;
    return t;
}

Dataset generate_synthetic(int num_classes, int input_dim, int per_class, double spread,
                           std::uint64_t seed) {
    if (num_classes < 2) throw config_error("generate_synthetic: need at least 2 classes");
    if (input_dim < 1) throw config_error("generate_synthetic: input_dim must be positive");
    if (per_class < 1) throw config_error("generate_synthetic: per_class must be positive");
    if (spread < 0.0) throw config_error("generate_synthetic: spread must be non-negative");

    Rng rng(seed);
    Dataset out;
    out.input_dim = input_dim;
    out.num_classes = num_classes;
    out.examples.reserve(static_cast<std::size_t>(num_classes) * per_class);
    for (int c = 0; c < num_classes; ++c) {
        const int axis = c % input_dim;
        for (int i = 0; i < per_class; ++i) {
            Example ex;
            ex.label = c;
            ex.features.resize(input_dim);
            for (int d = 0; d < input_dim; ++d) {
                const double mean = (d == axis) ? kSyntheticSeparation : 0.0;
                ex.features[d] = mean + spread * rng.normal();
            }
            out.examples.push_back(std::move(ex));
        }
    }
    return out;
}

namespace {

std::vector<unsigned char> read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw format_error("load_idx: cannot open " + path);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    return bytes;
}

std::uint32_t read_be32(const std::vector<unsigned char>& bytes, std::size_t offset,
                        const std::string& path) {
    if (offset + 4 > bytes.size())
        throw format_error("load_idx: " + path + " truncated at offset " +
                           std::to_string(offset) + " (need 4 bytes, have " +
                           std::to_string(bytes.size() - offset) + ")");
    return (std::uint32_t(bytes[offset]) << 24) | (std::uint32_t(bytes[offset + 1]) << 16) |
           (std::uint32_t(bytes[offset + 2]) << 8) | std::uint32_t(bytes[offset + 3]);
}

}  // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
    const std::vector<unsigned char> img = read_file_bytes(images_path);
    const std::vector<unsigned char> lab = read_file_bytes(labels_path);

    const std::uint32_t img_magic = read_be32(img, 0, images_path);
    if (img_magic != 0x00000803u) {
        std::ostringstream msg;
        msg << "load_idx: " << images_path << " bad image magic at offset 0 (got 0x" << std::hex
            << img_magic << ", want 0x803)";
        throw format_error(msg.str());
    }
    const std::uint32_t n = read_be32(img, 4, images_path);
    const std::uint32_t rows = read_be32(img, 8, images_path);
    const std::uint32_t cols = read_be32(img, 12, images_path);
    const std::size_t pixels = std::size_t(n) * rows * cols;
    if (img.size() < 16 + pixels)
        throw format_error("load_idx: " + images_path + " truncated at offset " +
                           std::to_string(img.size()) + " (need " + std::to_string(16 + pixels) +
                           " bytes)");

    const std::uint32_t lab_magic = read_be32(lab, 0, labels_path);
    if (lab_magic != 0x00000801u) {
        std::ostringstream msg;
        msg << "load_idx: " << labels_path << " bad label magic at offset 0 (got 0x" << std::hex
            << lab_magic << ", want 0x801)";
        throw format_error(msg.str());
    }
    const std::uint32_t n_labels = read_be32(lab, 4, labels_path);
    if (n_labels != n)
        throw format_error("load_idx: count mismatch (" + std::to_string(n) + " images, " +
                           std::to_string(n_labels) + " labels)");
    if (lab.size() < 8 + n_labels)
        throw format_error("load_idx: " + labels_path + " truncated at offset " +
                           std::to_string(lab.size()) + " (need " + std::to_string(8 + n_labels) +
                           " bytes)");

    Dataset out;
    out.input_dim = static_cast<int>(rows * cols);
    int max_label = 0;
    out.examples.resize(n);
    for (std::uint32_t i = 0; i < n; ++i) {
        Example& ex = out.examples[i];
        ex.features.resize(out.input_dim);
        const std::size_t base = 16 + std::size_t(i) * rows * cols;
        for (int d = 0; d < out.input_dim; ++d)
            ex.features[d] = static_cast<double>(img[base + d]) / 255.0;
        ex.label = static_cast<int>(lab[8 + i]);
        max_label = std::max(max_label, ex.label);
    }
    out.num_classes = max_label + 1;
    return out;
}

std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, ptr);
}

namespace {

double parse_double(const std::string& token, const std::string& where) {
    double v = 0.0;
    const char* begin = token.data();
    const char* end = begin + token.size();
    auto [ptr, ec] = std::from_chars(begin, end, v);
    if (ec != std::errc() || ptr != end)
        throw format_error(where + ": bad numeric value '" + token + "'");
    return v;
}

int parse_int(const std::string& token, const std::string& where) {
    int v = 0;
    const char* begin = token.data();
    const char* end = begin + token.size();
    auto [ptr, ec] = std::from_chars(begin, end, v);
    if (ec != std::errc() || ptr != end)
        throw format_error(where + ": bad integer value '" + token + "'");
    return v;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (;;) {
        std::size_t comma = line.find(',', start);
        if (comma == std::string::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
}

}  // namespace

Dataset load_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw format_error("load_csv: cannot open " + path);

    std::string line;
    if (!std::getline(in, line)) throw format_error("load_csv: " + path + ":1: empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();

    const std::vector<std::string> header = split_csv_line(line);
    if (header.size() < 2 || header.back() != "label")
        throw format_error("load_csv: " + path + ":1: header must be f0,...,f{k-1},label");
    const int input_dim = static_cast<int>(header.size()) - 1;
    for (int i = 0; i < input_dim; ++i)
        if (header[i] != "f" + std::to_string(i))
            throw format_error("load_csv: " + path + ":1: column " + std::to_string(i) +
                               " named '" + header[i] + "', expected 'f" + std::to_string(i) +
                               "'");

    Dataset out;
    out.input_dim = input_dim;
    int max_label = 0;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const std::string where = "load_csv: " + path + ":" + std::to_string(line_no);
        const std::vector<std::string> tokens = split_csv_line(line);
        if (static_cast<int>(tokens.size()) != input_dim + 1)
            throw format_error(where + ": expected " + std::to_string(input_dim + 1) +
                               " fields, got " + std::to_string(tokens.size()));
        Example ex;
        ex.features.resize(input_dim);
        for (int i = 0; i < input_dim; ++i) ex.features[i] = parse_double(tokens[i], where);
        ex.label = parse_int(tokens.back(), where);
        if (ex.label < 0) throw format_error(where + ": negative label");
        max_label = std::max(max_label, ex.label);
        out.examples.push_back(std::move(ex));
    }
    if (out.examples.empty()) throw format_error("load_csv: " + path + ": no data rows");
    out.num_classes = max_label + 1;
    return out;
}

void save_csv(const std::string& path, const Dataset& dataset) {
    std::ofstream out(path, std::ios::binary);  // binary keeps '\n' endings everywhere
    if (!out) throw format_error("save_csv: cannot open " + path + " for writing");
    for (int i = 0; i < dataset.input_dim; ++i) out << 'f' << i << ',';
    out << "label\n";
    for (const Example& ex : dataset.examples) {
        for (double v : ex.features) out << format_double(v) << ',';
        out << ex.label << '\n';
    }
    if (!out) throw format_error("save_csv: write failure on " + path);
}

std::vector<Dataset> partition(const Dataset& dataset, const PartitionConfig& cfg) {
    const int m = dataset.num_classes;
    if (cfg.n < m)
        throw config_error("partition: " + std::to_string(cfg.n) +
                           " clients cannot form " + std::to_string(m) + " label groups");
    if (!(cfg.q > 0.0 && cfg.q <= 1.0))
        throw config_error("partition: q must lie in (0, 1]");

    // Group g holds a contiguous client range; the first n mod M groups get
    // the extra client.
    const int base = cfg.n / m;
    const int extra = cfg.n % m;
    std::vector<int> group_start(m), group_size(m);
    int next = 0;
    for (int g = 0; g < m; ++g) {
        group_start[g] = next;
        group_size[g] = base + (g < extra ? 1 : 0);
        next += group_size[g];
    }

    Rng rng(cfg.seed);
    std::vector<Dataset> shards(cfg.n);
    for (Dataset& s : shards) {
        s.input_dim = dataset.input_dim;
        s.num_classes = dataset.num_classes;
    }
    for (const Example& ex : dataset.examples) {
        int group = ex.label;
        if (rng.uniform() >= cfg.q) {
            int other = static_cast<int>(rng.uniform_below(m - 1));
            group = (other >= ex.label) ? other + 1 : other;
        }
        const int client =
            group_start[group] + static_cast<int>(rng.uniform_below(group_size[group]));
        shards[client].examples.push_back(ex);
    }
    return shards;
}

RootSplit sample_root(const Dataset& dataset, const RootConfig& cfg) {
    const std::size_t n = dataset.size();
    if (cfg.size < 1) throw config_error("sample_root: size must be at least 1");
    if (static_cast<std::size_t>(cfg.size) > n)
        throw config_error("sample_root: size " + std::to_string(cfg.size) + " exceeds dataset (" +
                           std::to_string(n) + " examples)");

    Rng rng(cfg.seed);
    std::vector<char> chosen(n, 0);
    if (cfg.kind == RootCase::CaseI) {
        std::vector<std::size_t> perm(n);
        for (std::size_t i = 0; i < n; ++i) perm[i] = i;
        rng.shuffle(perm);
        for (int i = 0; i < cfg.size; ++i) chosen[perm[i]] = 1;
    } else {
        if (cfg.bias_probability < 0.0 || cfg.bias_probability > 1.0)
            throw config_error("sample_root: bias_probability must lie in [0, 1]");
        if (cfg.biased_class < 0 || cfg.biased_class >= dataset.num_classes)
            throw config_error("sample_root: biased_class " + std::to_string(cfg.biased_class) +
                               " outside [0, " + std::to_string(dataset.num_classes) + ")");
        // Round half up.
        const int biased_count =
            static_cast<int>(std::floor(cfg.bias_probability * cfg.size + 0.5));
        std::vector<std::size_t> biased, others;
        for (std::size_t i = 0; i < n; ++i)
            (dataset.examples[i].label == cfg.biased_class ? biased : others).push_back(i);
        if (static_cast<std::size_t>(biased_count) > biased.size())
            throw config_error("sample_root: need " + std::to_string(biased_count) +
                               " examples of class " + std::to_string(cfg.biased_class) +
                               ", dataset has " + std::to_string(biased.size()));
        const int other_count = cfg.size - biased_count;
        if (static_cast<std::size_t>(other_count) > others.size())
            throw config_error("sample_root: need " + std::to_string(other_count) +
                               " examples outside class " + std::to_string(cfg.biased_class) +
                               ", dataset has " + std::to_string(others.size()));
        rng.shuffle(biased);
        rng.shuffle(others);
        for (int i = 0; i < biased_count; ++i) chosen[biased[i]] = 1;
        for (int i = 0; i < other_count; ++i) chosen[others[i]] = 1;
    }

    RootSplit split;
    split.root.input_dim = split.remainder.input_dim = dataset.input_dim;
    split.root.num_classes = split.remainder.num_classes = dataset.num_classes;
    for (std::size_t i = 0; i < n; ++i)
        (chosen[i] ? split.root : split.remainder).examples.push_back(dataset.examples[i]);
    return split;
}

int flip_label(int label, int num_classes) {
    if (label < 0 || label >= num_classes)
        throw config_error("flip_label: label " + std::to_string(label) + " outside [0, " +
                           std::to_string(num_classes) + ")");
    return num_classes - label - 1;
}

Example embed_trigger(const Example& example, const TriggerSpec& trigger, bool set_target_label) {
    Example out = example;
    for (std::size_t i = 0; i < trigger.indices.size(); ++i) {
        const int idx = trigger.indices[i];
        if (idx < 0 || static_cast<std::size_t>(idx) >= out.features.size())
            throw config_error("embed_trigger: feature index " + std::to_string(idx) +
                               " outside [0, " + std::to_string(out.features.size()) + ")");
        out.features[idx] = trigger.values[i];
    }
    if (set_target_label) out.label = trigger.target_label;
    return out;
}

Dataset make_target_test_set(const Dataset& test, const TriggerSpec& trigger) {
    Dataset out;
    out.input_dim = test.input_dim;
    out.num_classes = test.num_classes;
    for (const Example& ex : test.examples) {
        if (ex.label == trigger.target_label) continue;
        out.examples.push_back(embed_trigger(ex, trigger, false));
    }
    return out;
}

std::vector<std::size_t> label_histogram(const Dataset& dataset) {
    std::vector<std::size_t> counts(dataset.num_classes, 0);
    for (const Example& ex : dataset.examples) counts[ex.label]++;
    return counts;
}

}  // namespace fltrust
