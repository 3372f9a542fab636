#include "nullscan/model.hpp"

#include "nullscan/nn.hpp"

namespace nullscan {

std::string_view to_string(Verdict verdict) {
  return verdict == Verdict::vulnerable ? "vulnerable" : "non_vulnerable";
}

VulnPrediction make_prediction(double non_vulnerable_logit,
                               double vulnerable_logit, std::string sample_id) {
  VulnPrediction p;
  p.sample_id = std::move(sample_id);
  p.logits = {non_vulnerable_logit, vulnerable_logit};
  p.probabilities = {sigmoid(non_vulnerable_logit), sigmoid(vulnerable_logit)};
  p.verdict = vulnerable_logit > non_vulnerable_logit ? Verdict::vulnerable
                                                      : Verdict::non_vulnerable;
  return p;
}

}  // namespace nullscan
