#pragma once

#include <atomic>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace cape::llm {

struct CompletionRequest {
  std::string prompt;
  int max_tokens = 64;
  double temperature = 0.5;
  double presence_penalty = 0.5;
  int n_samples = 5;
  std::vector<std::string> stop{"\nStep"};
  bool want_logprobs = true;
};

struct CompletionSample {
  std::string text;
  std::vector<double> token_logprobs;
  double mean_logprob = 0.0;
  bool empty_logprobs = true;

  // Fills mean_logprob from token_logprobs (0 and flagged when there are none).
  static CompletionSample make(std::string text, std::vector<double> token_logprobs);
};

double mean_logprob(std::span<const double> token_logprobs);

// First line of a completion with any leading "Step N:" label removed, trimmed.
std::string clean_step_text(std::string_view raw);

// Every public call is counted exactly once, however many transport attempts
// a backend makes internally.
class CompletionBackend {
 public:
  virtual ~CompletionBackend() = default;

  // Throws InputError for an empty prompt or n_samples < 1.
  std::vector<CompletionSample> complete(const CompletionRequest& request);

  // Mean log-probability (<= 0) of `continuation` given `prompt`. Throws
  // CapabilityError when the backend cannot score.
  double score_continuation(const std::string& prompt, const std::string& continuation);

  std::uint64_t completion_calls() const noexcept { return completion_calls_.load(); }
  std::uint64_t scoring_calls() const noexcept { return scoring_calls_.load(); }

 protected:
  virtual std::vector<CompletionSample> do_complete(const CompletionRequest& request) = 0;
  virtual double do_score(const std::string& prompt, const std::string& continuation) = 0;

 private:
  std::atomic<std::uint64_t> completion_calls_{0};
  std::atomic<std::uint64_t> scoring_calls_{0};
};

// Forwards to a shared backend while keeping its own counters, so one
// episode's call counts are isolated from concurrent episodes.
class CountingBackend final : public CompletionBackend {
 public:
  explicit CountingBackend(CompletionBackend& inner) : inner_(inner) {}

 protected:
  std::vector<CompletionSample> do_complete(const CompletionRequest& request) override {
    return inner_.complete(request);
  }
  double do_score(const std::string& prompt, const std::string& continuation) override {
    return inner_.score_continuation(prompt, continuation);
  }

 private:
  CompletionBackend& inner_;
};

}  // namespace cape::llm
