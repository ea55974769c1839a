#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "ecoc/data.hpp"
#include "ecoc/model.hpp"

namespace ecoc {

enum class PerBitLoss : std::uint8_t {
    kLogisticMargin = 0,  // log(1 + exp(-t_i * z_i))
};

struct TrainConfig {
    int epochs = 5;
    int batch_size = 32;
    double learning_rate = 0.05;
    double momentum = 0.9;  // 0 disables
    std::uint64_t seed = 1;
    double validation_fraction = 0.1;
    PerBitLoss per_bit_loss = PerBitLoss::kLogisticMargin;
    bool freeze_bottom = true;  // fine-tuning: frozen (default) or shared bottom

    void validate() const;
};

struct BaseTrainResult {
    OneHotModel model;
    double train_error = 1.0;
    double validation_error = 1.0;
};

struct FinetuneResult {
    EcocEnsemble model;
    double train_error = 1.0;
    double validation_error = 1.0;
};

// Bitwise logistic loss on the margin t_i * z_i; convex, monotone decreasing
// in the margin, and it drives tanh(z_i) toward t_i at inference time.
double per_bit_loss(double logit, int target_bit);
Var per_bit_loss_on_tape(Tape& tape, Var logit_scalar, int target_bit);

// Cross-entropy -log softmax(z)[label], assembled from stable pieces.
Var cross_entropy_on_tape(Tape& tape, Var logits, int label);

// Trains the M-class baseline with minibatch SGD (optional momentum).
// Progress CSV lines "epoch,split,loss,error" go to *progress when non-null.
// Deterministic given (dataset, config): same seed twice gives bit-identical
// parameters. Throws on an empty dataset or a non-finite loss.
BaseTrainResult train_base(const Architecture& arch, const Dataset& dataset,
                           const TrainConfig& config, std::ostream* progress = nullptr);

// Fine-tunes the N-branch ensemble from a trained baseline: the shared bottom
// is copied from the base model, each branch is trained on its own codeword
// bit. In frozen mode (default) bottom features are precomputed once and
// branches train independently; shared mode backpropagates into the bottom.
FinetuneResult finetune_ensemble(const OneHotModel& base, const Dataset& dataset,
                                 const CodewordMatrix& codewords, const TrainConfig& config,
                                 std::ostream* progress = nullptr);

// Misclassification fraction under predict(). Throws on an empty dataset.
double evaluate_error_rate(const Model& model, const Dataset& dataset);

}  // namespace ecoc
