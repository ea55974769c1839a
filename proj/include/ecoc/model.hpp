#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "ecoc/codes.hpp"
#include "ecoc/tape.hpp"
#include "ecoc/tensor.hpp"
#include "ecoc/util.hpp"

namespace ecoc {

enum class BottomKind : std::uint8_t {
    kNone = 0,   // features are the raw input (linear probes, oracle tests)
    kDense = 1,  // one dense layer + relu (vector data)
    kConv = 2,   // two conv3x3/relu/maxpool stages (image data)
};

// Desk-scale network shape shared by the one-hot baseline and the ECOC
// ensemble: a common bottom producing a feature vector, then either an
// M-logit head (baseline) or N one-logit branches (ensemble).
struct Architecture {
    BottomKind bottom = BottomKind::kDense;
    std::vector<std::size_t> input_shape;  // {dims} or {C,H,W}
    int conv_channels1 = 8;
    int conv_channels2 = 16;
    int bottom_hidden = 32;  // dense-bottom width
    int branch_hidden = 16;  // 0 = single dense layer per branch
    int head_hidden = 32;    // 0 = single dense layer head

    std::size_t input_size() const {
        std::size_t n = input_shape.empty() ? 0 : 1;
        for (std::size_t e : input_shape) n *= e;
        return n;
    }

    std::size_t feature_dim() const {
        switch (bottom) {
            case BottomKind::kNone:
                return input_size();
            case BottomKind::kDense:
                return static_cast<std::size_t>(bottom_hidden);
            case BottomKind::kConv:
                return static_cast<std::size_t>(conv_channels2) * (input_shape.at(1) / 4) *
                       (input_shape.at(2) / 4);
        }
        return 0;
    }
};

// Ensemble of Fig.-1 shape: shared bottom, then one branch per codeword bit,
// each emitting exactly one logit. The output activation is tanh, fixed.
struct EcocEnsemble {
    Architecture arch;
    CodewordMatrix codewords;
    std::vector<Tensor> shared_bottom;
    std::vector<std::vector<Tensor>> branches;  // codewords.code_length entries

    int class_count() const { return codewords.class_count; }
    int code_length() const { return codewords.code_length; }
};

// Baseline M-class softmax classifier over the same bottom.
struct OneHotModel {
    Architecture arch;
    int class_count = 0;
    std::vector<Tensor> shared_bottom;
    std::vector<Tensor> head;
};

using Model = std::variant<OneHotModel, EcocEnsemble>;

// ---- initialization ----------------------------------------------------------

std::vector<Tensor> init_bottom_params(const Architecture& arch, Rng& rng);
std::vector<Tensor> init_branch_params(const Architecture& arch, Rng& rng);
std::vector<Tensor> init_head_params(const Architecture& arch, int class_count, Rng& rng);

EcocEnsemble init_ecoc(const Architecture& arch, CodewordMatrix codewords, Rng& rng);
OneHotModel init_onehot(const Architecture& arch, int class_count, Rng& rng);

// ---- forward ------------------------------------------------------------------

// Tape builders. When param_vars is non-null, parameters become requires-grad
// leaves and their Vars are appended in block order (for the trainer);
// otherwise they enter the tape as constants.
Var bottom_features_on_tape(Tape& tape, const Architecture& arch,
                            const std::vector<Tensor>& bottom, Var x,
                            std::vector<Var>* param_vars = nullptr);
Var branch_logit_on_tape(Tape& tape, const Architecture& arch, const std::vector<Tensor>& branch,
                         Var features, std::vector<Var>* param_vars = nullptr);
Var head_logits_on_tape(Tape& tape, const Architecture& arch, const std::vector<Tensor>& head,
                        Var features, std::vector<Var>* param_vars = nullptr);
// Full ensemble forward, parameters constant: returns the length-N logit vector z.
Var ecoc_logits_on_tape(Tape& tape, const EcocEnsemble& model, Var x);
Var onehot_logits_on_tape(Tape& tape, const OneHotModel& model, Var x);
inline Var logits_on_tape(Tape& tape, const EcocEnsemble& model, Var x) {
    return ecoc_logits_on_tape(tape, model, x);
}
inline Var logits_on_tape(Tape& tape, const OneHotModel& model, Var x) {
    return onehot_logits_on_tape(tape, model, x);
}

// Plain logits for inference (scratch tape inside).
Tensor logits(const EcocEnsemble& model, const Tensor& x);
Tensor logits(const OneHotModel& model, const Tensor& x);

// ---- probability maps ----------------------------------------------------------

// rho_k = s . C_k for a given activation vector s (length N).
Tensor correlations_from_activations(const Tensor& activations, const CodewordMatrix& codes);
// rho_k = tanh(z) . C_k.
Tensor correlations(const Tensor& z, const CodewordMatrix& codes);

struct ClassProbabilities {
    Tensor probs;
    bool degenerate = false;  // every correlation <= 0; probs is the uniform vector
};

// p(k) = max(rho_k,0) / sum_i max(rho_i,0); all-nonpositive input yields the
// uniform vector with the degenerate flag set instead of a division by zero.
ClassProbabilities class_probabilities(const Tensor& correlations);

// Max-subtracted softmax of a logit vector.
Tensor softmax_probabilities(const Tensor& z);

// Lowest index attaining the maximum.
int argmax_lowest(const Tensor& v);

int predict(const EcocEnsemble& model, const Tensor& x);
int predict(const OneHotModel& model, const Tensor& x);
int predict(const Model& model, const Tensor& x);

// Prediction from an already-computed logit vector (shared by the attack
// inner loops, which have z on the tape anyway).
int predict_from_logits(const EcocEnsemble& model, const Tensor& z);
int predict_from_logits(const OneHotModel& model, const Tensor& z);

// Class probabilities of an input under either model kind (ECOC map or softmax).
Tensor predicted_probabilities(const Model& model, const Tensor& x);

// ---- checkpoint I/O -------------------------------------------------------------

struct CheckpointError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Format: magic "ECOC1", u64-length-prefixed header (model kind, architecture
// descriptor, M, N, codeword rows, pixel-range tag), row-major double
// parameter blocks, trailing FNV-1a 64-bit checksum of all preceding bytes.
void save_checkpoint(const Model& model, const std::string& path);
Model load_checkpoint(const std::string& path);

std::vector<std::uint8_t> serialize_model(const Model& model);
Model deserialize_model(const std::vector<std::uint8_t>& bytes);

}  // namespace ecoc
