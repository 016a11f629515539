#pragma once

#include <cstdint>

#include "kd/corpus/synthetic.hpp"
#include "kd/student/student.hpp"
#include "kd/teacher/teacher.hpp"

// Small, fast model settings shared by the unit tests.
namespace kd::testkit {

inline teacher::TeacherConfig quick_teacher(int context_len, std::uint64_t seed = 0) {
  teacher::TeacherConfig c;
  c.hidden = 32;
  c.heads = 2;
  c.layers = 1;
  c.ff_mult = 2;
  c.context_len = context_len;
  c.epochs = 8;
  c.lr = 3e-3;
  c.weight_decay = 1e-4;
  c.batch_size = 32;
  c.pretrain_steps = 60;
  c.seed = seed;
  return c;
}

inline student::StudentConfig quick_student(std::uint64_t seed = 0) {
  student::StudentConfig c;
  c.hidden = 16;
  c.heads = 2;
  c.layers = 1;
  c.ff_mult = 2;
  c.epochs = 3;
  c.lr = 3e-3;
  c.weight_decay = 1e-4;
  c.batch_size = 16;
  c.seed = seed;
  return c;
}

inline corpus::SynthConfig small_world(int n_train = 120, int n_test = 40) {
  corpus::SynthConfig c;
  c.n_states = 20;
  c.n_actions = 10;
  c.n_verbs = 5;
  c.n_objects = 4;
  c.feature_dim = 6;
  c.context_len = 3;
  c.trajectory_len = 6;
  c.n_train = n_train;
  c.n_test = n_test;
  return c;
}

}  // namespace kd::testkit
