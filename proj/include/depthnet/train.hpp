// Deterministic training loop shared by the CLI, the bindings, and the
// acceptance experiments.
//
// Batch elements run forward+backward on two fixed lanes. Each lane
// accumulates parameter gradients into private buffers (GradSinkScope), and
// the lanes are merged in lane order afterwards, so results are identical
// bit for bit no matter how the threads are scheduled — or whether the
// second lane runs on a thread at all.
#pragma once

#include <functional>
#include <thread>

#include "depthnet/data.hpp"
#include "depthnet/model.hpp"
#include "depthnet/optim.hpp"

namespace depthnet {

struct TrainOptions {
  int steps = 1000;
  int batch_size = 8;  // shrinks to the scene count when fewer are available
  double lr_start = 4e-5;
  double lr_end = 4e-6;
  AdamConfig adam;
  SilogParams silog;
  bool use_augment = true;
  uint64_t seed = 1;
};

struct TrainLogEntry {
  int step;
  double lr;
  double loss;
};

namespace detail {

struct TrainLane {
  GradSinkScope<float>::Map sink_map;
  std::vector<std::vector<float>> buffers;
  std::exception_ptr error;
};

inline void run_lane(const DepthNet& model, const SilogParams& silog,
                     const std::vector<DepthSample>& items, size_t begin, size_t end,
                     float inv_batch, TrainLane& lane, std::vector<double>& losses) {
  try {
    GradSinkScope<float> scope(&lane.sink_map);
    for (size_t i = begin; i < end; ++i) {
      auto loss = model.forward_loss(items[i].rgb, items[i].depth, items[i].mask, silog);
      losses[i] = double(loss.item());
      mul_scalar(loss, inv_batch).backward();
    }
  } catch (...) {
    lane.error = std::current_exception();
  }
}

}  // namespace detail

inline std::vector<TrainLogEntry> train(
    DepthNet& model, const std::vector<DepthSample>& scenes, const TrainOptions& opts,
    const std::function<void(const TrainLogEntry&)>& on_step = {}) {
  if (scenes.empty()) throw ValueError("training requires at least one scene");
  if (opts.steps < 0) throw ValueError("training steps must be >= 0");
  const size_t batch = size_t(std::max(1, std::min<int>(opts.batch_size, int(scenes.size()))));

  Adam optimizer(model.params(), opts.adam);
  Rng rng = Rng(opts.seed).fork(0x7e41);
  std::vector<size_t> order(scenes.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  size_t cursor = order.size();  // forces a shuffle on first use

  auto& params = model.params().all();
  detail::TrainLane lanes[2];
  for (auto& lane : lanes) {
    lane.buffers.resize(params.size());
    for (size_t pi = 0; pi < params.size(); ++pi)
      lane.sink_map[params[pi].tensor.node().get()] = &lane.buffers[pi];
  }

  std::vector<TrainLogEntry> log;
  log.reserve(size_t(opts.steps));
  std::vector<DepthSample> items(batch);
  std::vector<double> losses(batch);
  for (int step = 0; step < opts.steps; ++step) {
    for (size_t b = 0; b < batch; ++b) {
      if (cursor >= order.size()) {
        for (size_t i = order.size(); i > 1; --i)
          std::swap(order[i - 1], order[rng.uniform_int(i)]);
        cursor = 0;
      }
      const DepthSample& base = scenes[order[cursor++]];
      items[b] = opts.use_augment ? augment(base, rng) : base;
    }

    model.params().zero_grads();
    for (auto& lane : lanes) {
      lane.error = nullptr;
      for (auto& buf : lane.buffers) buf.clear();
    }
    const size_t half = (batch + 1) / 2;
    const float inv_batch = 1.f / float(batch);
    std::thread second;
    if (half < batch)
      second = std::thread(detail::run_lane, std::cref(model), std::cref(opts.silog),
                           std::cref(items), half, batch, inv_batch, std::ref(lanes[1]),
                           std::ref(losses));
    detail::run_lane(model, opts.silog, items, 0, half, inv_batch, lanes[0], losses);
    if (second.joinable()) second.join();
    for (auto& lane : lanes)
      if (lane.error) std::rethrow_exception(lane.error);

    for (size_t pi = 0; pi < params.size(); ++pi) {
      auto& grad = params[pi].tensor.grad();
      for (auto& lane : lanes) {
        const auto& buf = lane.buffers[pi];
        for (size_t i = 0; i < buf.size(); ++i) grad[i] += buf[i];
      }
    }

    double loss_acc = 0.0;
    for (size_t b = 0; b < batch; ++b) loss_acc += losses[b];
    const double lr = linear_lr(opts.lr_start, opts.lr_end, step, opts.steps);
    optimizer.step(lr);
    TrainLogEntry entry{step, lr, loss_acc / double(batch)};
    if (on_step) on_step(entry);
    log.push_back(entry);
  }
  return log;
}

}  // namespace depthnet
