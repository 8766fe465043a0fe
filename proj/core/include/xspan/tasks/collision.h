// Copyright 2026 The XSpan Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef XSPAN_TASKS_COLLISION_H_
#define XSPAN_TASKS_COLLISION_H_

#include <cstdint>
#include <optional>
#include <ostream>
#include <vector>

#include "xspan/numerics/rng.h"
#include "xspan/tasks/task_sample.h"

// Colliding-objects task. Particles move on a grid with constant Gaussian
// velocity (resampled at walls) and occasionally change color. A collision is
// two particles in the same rasterized cell. Questions ask for the quadrant of
// the last collision of a color pair (hard mode), or in easy mode for the
// quadrant of the last collision or the quadrants of the last three.
namespace xspan::tasks {

struct CollisionConfig {
  int grid_size = 16;
  int n_particles = 2;
  int n_colors = 5;
  double color_change_prob = 0.05;
  double matched_query_rate = 0.4;
  int64_t episode_steps = 1024;
  bool easy_mode = false;
  uint64_t seed = 0;
  // A question is asked at every question_interval-th timestep.
  int64_t question_interval = 64;
  // Easy mode: share of questions asking for the last three quadrants.
  double mapping_question_rate = 0.5;
  int max_velocity_retries = 100;

  // Throws ConfigError on an invalid field.
  void validate() const;
  int tokens_per_step() const { return easy_mode ? 6 : 8; }
};

struct ParticleState {
  double x = 0.0;
  double y = 0.0;
  double vx = 0.0;
  double vy = 0.0;
  int color = 0;
};

struct Collision {
  int64_t step = 0;
  int cell_x = 0;
  int cell_y = 0;
  int quadrant = 0;
  // Unordered pair, stored with color_a <= color_b. 0 in easy mode.
  int color_a = 0;
  int color_b = 0;
};

struct Episode {
  std::vector<std::vector<ParticleState>> states;  // [step][particle]
  std::vector<Collision> collisions;               // in step order
};

// floor(coord), kept inside [0, grid_size).
int rasterize(double coord, int grid_size);
// 0..3: (cy >= G/2) * 2 + (cx >= G/2).
int quadrant_of(int cell_x, int cell_y, int grid_size);

// Uniform positions, standard-normal velocities, uniform colors.
std::vector<ParticleState> initial_particles(const CollisionConfig& config, numerics::Rng& rng);
Episode simulate_collision(const CollisionConfig& config, numerics::Rng& rng);
// Starts from the given particles instead of random ones.
Episode simulate_collision(const CollisionConfig& config, numerics::Rng& rng,
                           std::vector<ParticleState> start);

// Fraction of steps with at least one collision.
double collision_rate(const Episode& episode);

// Token layout shared by both modes.
struct CollisionVocab {
  explicit CollisionVocab(const CollisionConfig& config);
  int coord(int v) const { return v; }
  int color(int c) const { return grid_ + c; }
  int query_color(int c) const { return grid_ + colors_ + c; }
  int no_question() const { return grid_ + 2 * colors_; }
  int quadrant(int q) const { return no_question() + 1 + q; }
  int ask_last() const { return no_question() + 5; }
  int ask_mapping() const { return no_question() + 6; }
  int answer_slot() const { return no_question() + 7; }
  // Quadrants of the last three collisions, oldest first.
  int mapping(int q_oldest, int q_middle, int q_last) const {
    return no_question() + 8 + q_oldest * 16 + q_middle * 4 + q_last;
  }
  int size() const { return no_question() + 8 + 64; }

 private:
  int grid_;
  int colors_;
};

// Emits tokens_per_step() tokens per timestep; questions are asked at the
// scheduled timesteps once some collision has happened. Throws
// std::invalid_argument if the episode produced no question.
TaskSample tokenize_collision(const Episode& episode, const CollisionConfig& config,
                              numerics::Rng& rng);

// Simulates episodes until one yields at least one question.
TaskSample gen_collision(const CollisionConfig& config, numerics::Rng& rng);

// One JSON object per timestep.
void write_episode_jsonl(std::ostream& out, const Episode& episode, const CollisionConfig& config);

}  // namespace xspan::tasks

#endif  // XSPAN_TASKS_COLLISION_H_
