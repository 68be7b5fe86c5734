// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <memory>

#include "preflab/autoregressive.hpp"
#include "preflab/policy.hpp"
#include "preflab/tabular.hpp"

namespace preflab {

struct World;

// Text checkpoint: a short header (format version, kind, backend, shape)
// followed by one parameter per line in shortest round-trip decimal form.
// Tabular checkpoints store logits only; reloading one needs the world that
// defines the catalogs.
void save_checkpoint(const Policy& policy, const std::filesystem::path& path);
void save_checkpoint(const RewardModel& model, const std::filesystem::path& path);

std::unique_ptr<Policy> load_policy_checkpoint(const std::filesystem::path& path,
                                               const World* world);
std::unique_ptr<RewardModel> load_reward_model_checkpoint(const std::filesystem::path& path,
                                                          const World* world);

}  // namespace preflab
