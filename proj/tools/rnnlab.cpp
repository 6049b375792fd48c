#include "rnnlab/cli.hpp"

int main(int argc, char** argv) { return rnnlab::cli::run(argc, argv); }
