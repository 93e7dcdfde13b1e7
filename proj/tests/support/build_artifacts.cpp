// Builds (or validates the cache of) every trained model the slow suites use.

#include <iostream>
#include <set>

#include "artifacts.hpp"

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: build_artifacts <work-dir>\n";
    return 2;
  }
  try {
    teawib::testing::Artifacts a(argv[1], teawib::testing::fresh_requested());
    a.pretrained();
    a.generic();
    teawib::AblationFlags frozen, inner;
    frozen.frozen_extractor = true;
    inner.wib_inner_only = true;
    a.generic(frozen);
    a.generic(inner);
    a.autoencoders();
    std::cout << "artifacts ready in " << a.dir() << '\n';
  } catch (const std::exception& e) {
    std::cerr << "build_artifacts: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
