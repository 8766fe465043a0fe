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

#include "xspan/tasks/collision.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "json.hpp"
#include "xspan/errors.h"

namespace xspan::tasks {

void CollisionConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError("collision task: " + what);
  };
  require(grid_size >= 2, "grid_size must be >= 2");
  require(n_particles == 2, "n_particles must be 2");
  require(n_colors >= 1, "n_colors must be >= 1");
  require(color_change_prob >= 0.0 && color_change_prob <= 1.0, "color_change_prob not in [0, 1]");
  require(matched_query_rate >= 0.0 && matched_query_rate <= 1.0,
          "matched_query_rate not in [0, 1]");
  require(mapping_question_rate >= 0.0 && mapping_question_rate <= 1.0,
          "mapping_question_rate not in [0, 1]");
  require(episode_steps >= 1, "episode_steps must be >= 1");
  require(question_interval >= 1, "question_interval must be >= 1");
  require(max_velocity_retries >= 0, "max_velocity_retries must be >= 0");
}

int rasterize(double coord, int grid_size) {
  return std::clamp(static_cast<int>(std::floor(coord)), 0, grid_size - 1);
}

int quadrant_of(int cell_x, int cell_y, int grid_size) {
  const int half = grid_size / 2;
  return (cell_y >= half ? 2 : 0) + (cell_x >= half ? 1 : 0);
}

std::vector<ParticleState> initial_particles(const CollisionConfig& config, numerics::Rng& rng) {
  std::vector<ParticleState> out(static_cast<size_t>(config.n_particles));
  for (ParticleState& p : out) {
    p.x = rng.uniform(0.0, config.grid_size);
    p.y = rng.uniform(0.0, config.grid_size);
    p.vx = rng.normal();
    p.vy = rng.normal();
    p.color = config.easy_mode ? 0 : static_cast<int>(rng.uniform_int(0, config.n_colors - 1));
  }
  return out;
}

Episode simulate_collision(const CollisionConfig& config, numerics::Rng& rng) {
  config.validate();
  std::vector<ParticleState> start = initial_particles(config, rng);
  return simulate_collision(config, rng, std::move(start));
}

namespace {

bool inside(double v, int grid) { return v >= 0.0 && v < static_cast<double>(grid); }

void move(ParticleState& p, const CollisionConfig& config, numerics::Rng& rng) {
  const int g = config.grid_size;
  for (int attempt = 0; attempt < config.max_velocity_retries; ++attempt) {
    if (inside(p.x + p.vx, g) && inside(p.y + p.vy, g)) break;
    p.vx = rng.normal();
    p.vy = rng.normal();
  }
  const double top = std::nextafter(static_cast<double>(g), 0.0);
  p.x = std::clamp(p.x + p.vx, 0.0, top);
  p.y = std::clamp(p.y + p.vy, 0.0, top);
}

}  // namespace

Episode simulate_collision(const CollisionConfig& config, numerics::Rng& rng,
                           std::vector<ParticleState> start) {
  config.validate();
  if (static_cast<int>(start.size()) != config.n_particles) {
    throw std::invalid_argument("simulate_collision: wrong number of particles");
  }
  const int g = config.grid_size;
  Episode ep;
  ep.states.reserve(static_cast<size_t>(config.episode_steps));
  std::vector<ParticleState> cur = std::move(start);
  for (int64_t step = 0; step < config.episode_steps; ++step) {
    ep.states.push_back(cur);
    const int ax = rasterize(cur[0].x, g), ay = rasterize(cur[0].y, g);
    const int bx = rasterize(cur[1].x, g), by = rasterize(cur[1].y, g);
    if (ax == bx && ay == by) {
      Collision c;
      c.step = step;
      c.cell_x = ax;
      c.cell_y = ay;
      c.quadrant = quadrant_of(ax, ay, g);
      c.color_a = std::min(cur[0].color, cur[1].color);
      c.color_b = std::max(cur[0].color, cur[1].color);
      ep.collisions.push_back(c);
    }
    for (ParticleState& p : cur) {
      move(p, config, rng);
      if (!config.easy_mode && config.n_colors > 1 && rng.bernoulli(config.color_change_prob)) {
        // Uniform over the other colors.
        const auto shift = static_cast<int>(rng.uniform_int(1, config.n_colors - 1));
        p.color = (p.color + shift) % config.n_colors;
      }
    }
  }
  return ep;
}

double collision_rate(const Episode& episode) {
  if (episode.states.empty()) return 0.0;
  return static_cast<double>(episode.collisions.size()) /
         static_cast<double>(episode.states.size());
}

CollisionVocab::CollisionVocab(const CollisionConfig& config)
    : grid_(config.grid_size), colors_(config.n_colors) {}

TaskSample tokenize_collision(const Episode& episode, const CollisionConfig& config,
                              numerics::Rng& rng) {
  config.validate();
  const CollisionVocab vocab(config);
  const int g = config.grid_size;
  TaskSample s;
  auto push = [&s](int input, int target, bool scored) {
    s.input_tokens.push_back(input);
    s.target_tokens.push_back(target);
    s.loss_mask.push_back(scored ? 1 : 0);
  };

  size_t seen = 0;  // collisions up to and including the current step
  const auto steps = static_cast<int64_t>(episode.states.size());
  for (int64_t step = 0; step < steps; ++step) {
    while (seen < episode.collisions.size() && episode.collisions[seen].step <= step) ++seen;
    const auto& ps = episode.states[step];
    for (int p = 0; p < 2; ++p) {
      const int cx = rasterize(ps[p].x, g);
      const int cy = rasterize(ps[p].y, g);
      push(vocab.coord(cx), vocab.coord(cx), false);
      push(vocab.coord(cy), vocab.coord(cy), false);
    }
    const bool ask = (step + 1) % config.question_interval == 0 && seen > 0;
    const Collision& last = ask ? episode.collisions[seen - 1] : Collision{};

    if (config.easy_mode) {
      if (!ask) {
        push(vocab.no_question(), vocab.no_question(), false);
        push(vocab.no_question(), vocab.no_question(), false);
      } else if (seen >= 3 && rng.bernoulli(config.mapping_question_rate)) {
        const int target = vocab.mapping(episode.collisions[seen - 3].quadrant,
                                         episode.collisions[seen - 2].quadrant, last.quadrant);
        push(vocab.ask_mapping(), vocab.ask_mapping(), false);
        push(vocab.answer_slot(), target, true);
      } else {
        push(vocab.ask_last(), vocab.ask_last(), false);
        push(vocab.answer_slot(), vocab.quadrant(last.quadrant), true);
      }
      continue;
    }

    push(vocab.color(ps[0].color), vocab.color(ps[0].color), false);
    push(vocab.color(ps[1].color), vocab.color(ps[1].color), false);
    if (!ask) {
      push(vocab.no_question(), vocab.no_question(), false);
      push(vocab.no_question(), vocab.no_question(), false);
      continue;
    }
    int qa = last.color_a;
    int qb = last.color_b;
    if (!rng.bernoulli(config.matched_query_rate)) {
      // Random pair, resampled until some earlier collision has it.
      for (int attempt = 0; attempt < 1000; ++attempt) {
        const auto a = static_cast<int>(rng.uniform_int(0, config.n_colors - 1));
        const auto b = static_cast<int>(rng.uniform_int(0, config.n_colors - 1));
        const int lo = std::min(a, b), hi = std::max(a, b);
        const bool answerable =
            std::any_of(episode.collisions.begin(), episode.collisions.begin() + seen,
                        [lo, hi](const Collision& c) { return c.color_a == lo && c.color_b == hi; });
        if (answerable) {
          qa = lo;
          qb = hi;
          break;
        }
      }
    }
    int quadrant = 0;
    for (size_t c = seen; c-- > 0;) {
      if (episode.collisions[c].color_a == qa && episode.collisions[c].color_b == qb) {
        quadrant = episode.collisions[c].quadrant;
        break;
      }
    }
    if (rng.bernoulli(0.5)) std::swap(qa, qb);
    push(vocab.query_color(qa), vocab.query_color(qa), false);
    push(vocab.query_color(qb), vocab.quadrant(quadrant), true);
  }
  if (s.scored_count() == 0) {
    throw std::invalid_argument("tokenize_collision: episode produced no question");
  }
  return s;
}

TaskSample gen_collision(const CollisionConfig& config, numerics::Rng& rng) {
  for (int attempt = 0; attempt < 1000; ++attempt) {
    const Episode ep = simulate_collision(config, rng);
    bool answerable = false;
    for (const Collision& c : ep.collisions) {
      if (c.step < config.episode_steps - config.episode_steps % config.question_interval) {
        answerable = true;
        break;
      }
    }
    if (answerable) return tokenize_collision(ep, config, rng);
  }
  throw std::runtime_error("gen_collision: no episode with a question after 1000 attempts");
}

void write_episode_jsonl(std::ostream& out, const Episode& episode,
                         const CollisionConfig& config) {
  size_t next = 0;
  for (size_t step = 0; step < episode.states.size(); ++step) {
    nlohmann::json rec;
    rec["step"] = step;
    nlohmann::json particles = nlohmann::json::array();
    for (const ParticleState& p : episode.states[step]) {
      nlohmann::json jp = {{"x", p.x},
                           {"y", p.y},
                           {"cell", {rasterize(p.x, config.grid_size), rasterize(p.y, config.grid_size)}}};
      if (!config.easy_mode) jp["color"] = p.color;
      particles.push_back(jp);
    }
    rec["particles"] = particles;
    if (next < episode.collisions.size() &&
        episode.collisions[next].step == static_cast<int64_t>(step)) {
      const Collision& c = episode.collisions[next++];
      rec["collision"] = {{"quadrant", c.quadrant}, {"colors", {c.color_a, c.color_b}}};
    }
    out << rec.dump() << '\n';
  }
}

}  // namespace xspan::tasks
