#include <benchmark/benchmark.h>

#include "kd/corpus/synthetic.hpp"
#include "kd/nn/ops.hpp"
#include "kd/student/student.hpp"
#include "kd/teacher/teacher.hpp"
#include "kd/vocab/vocabulary.hpp"

namespace {

using namespace kd;

struct World {
  corpus::SyntheticSplit split;
  vocab::Vocabulary vocab;
};

const World& world() {
  static const World w = [] {
    corpus::SynthConfig c;
    c.n_train = 200;
    c.n_test = 50;
    auto split = corpus::gen_synthetic(c, 0);
    auto v = vocab::Vocabulary::build(split.train, split.test);
    return World{std::move(split), std::move(v)};
  }();
  return w;
}

teacher::TeacherConfig teacher_cfg() {
  teacher::TeacherConfig c;
  c.hidden = 32;
  c.heads = 2;
  c.layers = 1;
  return c;
}

student::StudentConfig student_cfg() {
  student::StudentConfig c;
  c.hidden = 32;
  c.heads = 2;
  c.layers = 1;
  return c;
}

void BM_TeacherForward(benchmark::State& state) {
  const auto& w = world();
  teacher::TeacherModel m(teacher_cfg(), teacher::TeacherDims::from(w.vocab));
  const auto tokens = w.vocab.encode_sequence(w.split.test.instances[0].segments, 5);
  for (auto _ : state) benchmark::DoNotOptimize(m.forward(tokens).y_action.total());
}
BENCHMARK(BM_TeacherForward);

void BM_StudentPredict(benchmark::State& state) {
  const auto& w = world();
  student::StudentModel m(student_cfg(), {static_cast<int>(w.split.train.feature_dim()), w.vocab.num_actions()});
  const auto& frames = w.split.test.instances[0].frames;
  for (auto _ : state) benchmark::DoNotOptimize(m.predict(frames).y_final.total());
}
BENCHMARK(BM_StudentPredict);

void BM_StudentStepWithDistillation(benchmark::State& state) {
  const auto& w = world();
  student::StudentModel m(student_cfg(), {static_cast<int>(w.split.train.feature_dim()), w.vocab.num_actions()});
  const auto& inst = w.split.train.instances[0];
  const auto inter = student::intermediate_labels(inst, w.vocab, student::IntermediateTarget::kCurrent);
  const int target = w.vocab.action_id(inst.target);
  std::vector<double> teacher_logits(static_cast<std::size_t>(w.vocab.num_actions()));
  for (std::size_t i = 0; i < teacher_logits.size(); ++i) teacher_logits[i] = 0.1 * static_cast<double>(i % 7);
  student::DistillConfig dc;
  dc.lambda_s = 20.0;
  dc.top_k = 10;
  for (auto _ : state) {
    const auto g = m.forward_graph(inst.frames);
    const auto loss = nn::add(student::avt_loss(g, target, inter, {}),
                              nn::scale(student::distill_loss(g.final_logits, teacher_logits, dc), dc.lambda_s));
    nn::backward(loss);
    for (auto& p : m.params().entries()) p.var.zero_grad();
  }
}
BENCHMARK(BM_StudentStepWithDistillation);

void BM_TeacherEpoch(benchmark::State& state) {
  const auto& w = world();
  auto c = teacher_cfg();
  c.epochs = 1;
  c.lr = 3e-3;
  for (auto _ : state) benchmark::DoNotOptimize(teacher::finetune_teacher(w.split.train, w.vocab, c).dims().actions);
}
BENCHMARK(BM_TeacherEpoch)->Unit(benchmark::kMillisecond);

}  // namespace
