#include "ecoc/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace ecoc {

namespace {

Tensor glorot(std::vector<std::size_t> shape, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    Tensor t(std::move(shape));
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (double& v : t.values()) v = rng.uniform(-bound, bound);
    return t;
}

Var insert_params(Tape& tape, const std::vector<Tensor>& block, std::vector<Var>* param_vars,
                  std::vector<Var>& out) {
    out.reserve(block.size());
    for (const Tensor& p : block) {
        Var v = tape.leaf(p, param_vars != nullptr);
        if (param_vars) param_vars->push_back(v);
        out.push_back(v);
    }
    return out.empty() ? Var{} : out.front();
}

}  // namespace

// ---- initialization ----------------------------------------------------------

std::vector<Tensor> init_bottom_params(const Architecture& arch, Rng& rng) {
    switch (arch.bottom) {
        case BottomKind::kNone:
            return {};
        case BottomKind::kDense: {
            const std::size_t in = arch.input_size();
            const std::size_t h = static_cast<std::size_t>(arch.bottom_hidden);
            std::vector<Tensor> block;
            block.push_back(glorot({h, in}, in, h, rng));
            block.push_back(Tensor({h}));
            return block;
        }
        case BottomKind::kConv: {
            const std::size_t c_in = arch.input_shape.at(0);
            const std::size_t c1 = static_cast<std::size_t>(arch.conv_channels1);
            const std::size_t c2 = static_cast<std::size_t>(arch.conv_channels2);
            std::vector<Tensor> block;
            block.push_back(glorot({c1, c_in, 3, 3}, c_in * 9, c1 * 9, rng));
            block.push_back(Tensor({c1}));
            block.push_back(glorot({c2, c1, 3, 3}, c1 * 9, c2 * 9, rng));
            block.push_back(Tensor({c2}));
            return block;
        }
    }
    return {};
}

std::vector<Tensor> init_branch_params(const Architecture& arch, Rng& rng) {
    const std::size_t feat = arch.feature_dim();
    std::vector<Tensor> block;
    if (arch.branch_hidden > 0) {
        const std::size_t h = static_cast<std::size_t>(arch.branch_hidden);
        block.push_back(glorot({h, feat}, feat, h, rng));
        block.push_back(Tensor({h}));
        block.push_back(glorot({1, h}, h, 1, rng));
        block.push_back(Tensor({1}));
    } else {
        block.push_back(glorot({1, feat}, feat, 1, rng));
        block.push_back(Tensor({1}));
    }
    return block;
}

std::vector<Tensor> init_head_params(const Architecture& arch, int class_count, Rng& rng) {
    const std::size_t feat = arch.feature_dim();
    const std::size_t m = static_cast<std::size_t>(class_count);
    std::vector<Tensor> block;
    if (arch.head_hidden > 0) {
        const std::size_t h = static_cast<std::size_t>(arch.head_hidden);
        block.push_back(glorot({h, feat}, feat, h, rng));
        block.push_back(Tensor({h}));
        block.push_back(glorot({m, h}, h, m, rng));
        block.push_back(Tensor({m}));
    } else {
        block.push_back(glorot({m, feat}, feat, m, rng));
        block.push_back(Tensor({m}));
    }
    return block;
}

EcocEnsemble init_ecoc(const Architecture& arch, CodewordMatrix codewords, Rng& rng) {
    validate(codewords);
    EcocEnsemble model;
    model.arch = arch;
    model.codewords = std::move(codewords);
    model.shared_bottom = init_bottom_params(arch, rng);
    model.branches.resize(static_cast<std::size_t>(model.codewords.code_length));
    for (auto& branch : model.branches) branch = init_branch_params(arch, rng);
    return model;
}

OneHotModel init_onehot(const Architecture& arch, int class_count, Rng& rng) {
    OneHotModel model;
    model.arch = arch;
    model.class_count = class_count;
    model.shared_bottom = init_bottom_params(arch, rng);
    model.head = init_head_params(arch, class_count, rng);
    return model;
}

// ---- forward ------------------------------------------------------------------

Var bottom_features_on_tape(Tape& tape, const Architecture& arch,
                            const std::vector<Tensor>& bottom, Var x,
                            std::vector<Var>* param_vars) {
    std::vector<Var> p;
    insert_params(tape, bottom, param_vars, p);
    switch (arch.bottom) {
        case BottomKind::kNone:
            return x;
        case BottomKind::kDense:
            return tape.relu(tape.bias_add(tape.matmul(p[0], x), p[1]));
        case BottomKind::kConv: {
            Var h = tape.relu(tape.bias_add(tape.conv2d(x, p[0]), p[1]));
            h = tape.maxpool2x2(h);
            h = tape.relu(tape.bias_add(tape.conv2d(h, p[2]), p[3]));
            h = tape.maxpool2x2(h);
            return tape.flatten(h);
        }
    }
    throw std::logic_error("unknown bottom kind");
}

Var branch_logit_on_tape(Tape& tape, const Architecture& arch, const std::vector<Tensor>& branch,
                         Var features, std::vector<Var>* param_vars) {
    std::vector<Var> p;
    insert_params(tape, branch, param_vars, p);
    if (arch.branch_hidden > 0) {
        const Var h = tape.relu(tape.bias_add(tape.matmul(p[0], features), p[1]));
        return tape.bias_add(tape.matmul(p[2], h), p[3]);
    }
    return tape.bias_add(tape.matmul(p[0], features), p[1]);
}

Var head_logits_on_tape(Tape& tape, const Architecture& arch, const std::vector<Tensor>& head,
                        Var features, std::vector<Var>* param_vars) {
    std::vector<Var> p;
    insert_params(tape, head, param_vars, p);
    if (arch.head_hidden > 0) {
        const Var h = tape.relu(tape.bias_add(tape.matmul(p[0], features), p[1]));
        return tape.bias_add(tape.matmul(p[2], h), p[3]);
    }
    return tape.bias_add(tape.matmul(p[0], features), p[1]);
}

Var ecoc_logits_on_tape(Tape& tape, const EcocEnsemble& model, Var x) {
    const Var features = bottom_features_on_tape(tape, model.arch, model.shared_bottom, x);
    std::vector<Var> bits;
    bits.reserve(model.branches.size());
    for (const auto& branch : model.branches) {
        bits.push_back(branch_logit_on_tape(tape, model.arch, branch, features));
    }
    return tape.concat(bits);
}

Var onehot_logits_on_tape(Tape& tape, const OneHotModel& model, Var x) {
    const Var features = bottom_features_on_tape(tape, model.arch, model.shared_bottom, x);
    return head_logits_on_tape(tape, model.arch, model.head, features);
}

Tensor logits(const EcocEnsemble& model, const Tensor& x) {
    Tape tape;
    return tape.value(ecoc_logits_on_tape(tape, model, tape.constant(x)));
}

Tensor logits(const OneHotModel& model, const Tensor& x) {
    Tape tape;
    return tape.value(onehot_logits_on_tape(tape, model, tape.constant(x)));
}

// ---- probability maps ----------------------------------------------------------

Tensor correlations_from_activations(const Tensor& activations, const CodewordMatrix& codes) {
    if (activations.size() != static_cast<std::size_t>(codes.code_length)) {
        throw std::invalid_argument("correlations: activation length " +
                                    std::to_string(activations.size()) + " != N = " +
                                    std::to_string(codes.code_length));
    }
    Tensor rho({static_cast<std::size_t>(codes.class_count)});
    for (int k = 0; k < codes.class_count; ++k) {
        double s = 0.0;
        const std::int8_t* row = codes.row(k);
        for (int i = 0; i < codes.code_length; ++i) {
            s += activations[static_cast<std::size_t>(i)] * static_cast<double>(row[i]);
        }
        rho[static_cast<std::size_t>(k)] = s;
    }
    return rho;
}

Tensor correlations(const Tensor& z, const CodewordMatrix& codes) {
    Tensor s = z;
    for (double& v : s.values()) v = std::tanh(v);
    return correlations_from_activations(s, codes);
}

ClassProbabilities class_probabilities(const Tensor& correlations) {
    ClassProbabilities out;
    out.probs = Tensor::zeros_like(correlations);
    double denom = 0.0;
    for (std::size_t k = 0; k < correlations.size(); ++k) {
        const double clipped = std::max(correlations[k], 0.0);
        out.probs[k] = clipped;
        denom += clipped;
    }
    if (denom <= 0.0) {
        out.degenerate = true;
        const double u = 1.0 / static_cast<double>(correlations.size());
        for (double& v : out.probs.values()) v = u;
        return out;
    }
    for (double& v : out.probs.values()) v /= denom;
    return out;
}

Tensor softmax_probabilities(const Tensor& z) {
    Tape tape;
    return tape.value(tape.softmax(tape.constant(z)));
}

int argmax_lowest(const Tensor& v) {
    std::size_t arg = 0;
    for (std::size_t i = 1; i < v.size(); ++i) {
        if (v[i] > v[arg]) arg = i;
    }
    return static_cast<int>(arg);
}

int predict_from_logits(const EcocEnsemble& model, const Tensor& z) {
    const Tensor rho = correlations(z, model.codewords);
    const ClassProbabilities p = class_probabilities(rho);
    // with every correlation non-positive the normalized map is uninformative;
    // fall back to the raw correlations
    return p.degenerate ? argmax_lowest(rho) : argmax_lowest(p.probs);
}

int predict_from_logits(const OneHotModel& model, const Tensor& z) {
    (void)model;
    return argmax_lowest(softmax_probabilities(z));
}

int predict(const EcocEnsemble& model, const Tensor& x) {
    return predict_from_logits(model, logits(model, x));
}

int predict(const OneHotModel& model, const Tensor& x) {
    return predict_from_logits(model, logits(model, x));
}

int predict(const Model& model, const Tensor& x) {
    return std::visit([&](const auto& m) { return predict(m, x); }, model);
}

Tensor predicted_probabilities(const Model& model, const Tensor& x) {
    if (std::holds_alternative<EcocEnsemble>(model)) {
        const auto& m = std::get<EcocEnsemble>(model);
        return class_probabilities(correlations(logits(m, x), m.codewords)).probs;
    }
    const auto& m = std::get<OneHotModel>(model);
    return softmax_probabilities(logits(m, x));
}

// ---- checkpoint I/O -------------------------------------------------------------

namespace {

constexpr char kMagic[5] = {'E', 'C', 'O', 'C', '1'};
constexpr std::uint8_t kKindOneHot = 0;
constexpr std::uint8_t kKindEcoc = 1;
constexpr std::uint8_t kPixelRangeUnit = 0;

void put_tensor(std::vector<std::uint8_t>& out, const Tensor& t) {
    put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t e : t.shape()) put_u64(out, e);
    put_u64(out, t.size());
    for (double v : t.values()) put_f64(out, v);
}

Tensor get_tensor(ByteReader& r) {
    const std::uint32_t rank = r.u32();
    std::vector<std::size_t> shape(rank);
    for (auto& e : shape) e = r.u64();
    const std::uint64_t n = r.u64();
    Tensor t(shape);
    if (t.size() != n) throw CheckpointError("checkpoint: tensor size mismatch");
    for (std::size_t i = 0; i < n; ++i) t[i] = r.f64();
    return t;
}

void put_block(std::vector<std::uint8_t>& out, const std::vector<Tensor>& block) {
    put_u32(out, static_cast<std::uint32_t>(block.size()));
    for (const Tensor& t : block) put_tensor(out, t);
}

std::vector<Tensor> get_block(ByteReader& r) {
    const std::uint32_t n = r.u32();
    std::vector<Tensor> block;
    block.reserve(n);
    for (std::uint32_t i = 0; i < n; ++i) block.push_back(get_tensor(r));
    return block;
}

void put_header(std::vector<std::uint8_t>& out, std::uint8_t kind, const Architecture& arch,
                const CodewordMatrix& codes) {
    std::vector<std::uint8_t> h;
    put_u8(h, kind);
    put_u8(h, static_cast<std::uint8_t>(arch.bottom));
    put_u8(h, kPixelRangeUnit);
    put_u32(h, static_cast<std::uint32_t>(arch.input_shape.size()));
    for (std::size_t e : arch.input_shape) put_u64(h, e);
    put_u32(h, static_cast<std::uint32_t>(arch.conv_channels1));
    put_u32(h, static_cast<std::uint32_t>(arch.conv_channels2));
    put_u32(h, static_cast<std::uint32_t>(arch.bottom_hidden));
    put_u32(h, static_cast<std::uint32_t>(arch.branch_hidden));
    put_u32(h, static_cast<std::uint32_t>(arch.head_hidden));
    put_u32(h, static_cast<std::uint32_t>(codes.class_count));
    put_u32(h, static_cast<std::uint32_t>(codes.code_length));
    put_u8(h, codes.one_hot ? 1 : 0);
    for (std::int8_t v : codes.entries) put_u8(h, static_cast<std::uint8_t>(v));

    put_u64(out, h.size());
    out.insert(out.end(), h.begin(), h.end());
}

struct Header {
    std::uint8_t kind = 0;
    Architecture arch;
    CodewordMatrix codes;
};

Header get_header(ByteReader& r) {
    const std::uint64_t len = r.u64();
    const std::size_t end = r.pos + len;
    Header h;
    h.kind = r.u8();
    h.arch.bottom = static_cast<BottomKind>(r.u8());
    if (r.u8() != kPixelRangeUnit) throw CheckpointError("checkpoint: unknown pixel-range tag");
    const std::uint32_t rank = r.u32();
    h.arch.input_shape.resize(rank);
    for (auto& e : h.arch.input_shape) e = r.u64();
    h.arch.conv_channels1 = static_cast<int>(r.u32());
    h.arch.conv_channels2 = static_cast<int>(r.u32());
    h.arch.bottom_hidden = static_cast<int>(r.u32());
    h.arch.branch_hidden = static_cast<int>(r.u32());
    h.arch.head_hidden = static_cast<int>(r.u32());
    h.codes.class_count = static_cast<int>(r.u32());
    h.codes.code_length = static_cast<int>(r.u32());
    h.codes.one_hot = r.u8() != 0;
    h.codes.entries.resize(static_cast<std::size_t>(h.codes.class_count) * h.codes.code_length);
    for (auto& v : h.codes.entries) v = static_cast<std::int8_t>(r.u8());
    if (r.pos != end) throw CheckpointError("checkpoint: header length mismatch");
    return h;
}

}  // namespace

std::vector<std::uint8_t> serialize_model(const Model& model) {
    std::vector<std::uint8_t> out(kMagic, kMagic + 5);
    if (std::holds_alternative<OneHotModel>(model)) {
        const auto& m = std::get<OneHotModel>(model);
        put_header(out, kKindOneHot, m.arch, one_hot_matrix(m.class_count));
        put_u32(out, 2);
        put_block(out, m.shared_bottom);
        put_block(out, m.head);
    } else {
        const auto& m = std::get<EcocEnsemble>(model);
        put_header(out, kKindEcoc, m.arch, m.codewords);
        put_u32(out, static_cast<std::uint32_t>(1 + m.branches.size()));
        put_block(out, m.shared_bottom);
        for (const auto& branch : m.branches) put_block(out, branch);
    }
    put_u64(out, fnv1a64(out.data(), out.size()));
    return out;
}

Model deserialize_model(const std::vector<std::uint8_t>& bytes) {
    try {
        if (bytes.size() < 13 || !std::equal(kMagic, kMagic + 5, bytes.begin())) {
            throw CheckpointError("checkpoint: bad magic (want \"ECOC1\")");
        }
        const std::size_t body = bytes.size() - 8;
        ByteReader tail{bytes, body};
        const std::uint64_t want = tail.u64();
        const std::uint64_t got = fnv1a64(bytes.data(), body);
        if (want != got) throw CheckpointError("checkpoint: checksum failure");

        ByteReader r{bytes, 5};
        const Header h = get_header(r);
        const std::uint32_t blocks = r.u32();
        if (h.kind == kKindOneHot) {
            if (blocks != 2) throw CheckpointError("checkpoint: bad block count");
            OneHotModel m;
            m.arch = h.arch;
            m.class_count = h.codes.class_count;
            m.shared_bottom = get_block(r);
            m.head = get_block(r);
            if (r.pos != body) throw CheckpointError("checkpoint: trailing bytes");
            return m;
        }
        if (h.kind == kKindEcoc) {
            if (blocks < 1) throw CheckpointError("checkpoint: bad block count");
            EcocEnsemble m;
            m.arch = h.arch;
            m.codewords = h.codes;
            m.shared_bottom = get_block(r);
            m.branches.resize(blocks - 1);
            for (auto& branch : m.branches) branch = get_block(r);
            if (static_cast<int>(m.branches.size()) != m.codewords.code_length) {
                throw CheckpointError("checkpoint: branch count != N");
            }
            if (r.pos != body) throw CheckpointError("checkpoint: trailing bytes");
            return m;
        }
        throw CheckpointError("checkpoint: unknown model kind tag");
    } catch (const std::runtime_error& e) {
        throw CheckpointError(e.what());
    }
}

void save_checkpoint(const Model& model, const std::string& path) {
    const std::vector<std::uint8_t> bytes = serialize_model(model);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw CheckpointError("cannot write " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError("write failed for " + path);
}

Model load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return deserialize_model(bytes);
}

}  // namespace ecoc
