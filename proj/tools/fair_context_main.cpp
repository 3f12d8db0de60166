#include "fair_context/cli.hpp"

int main(int argc, char** argv) { return fairctx::cli::run(argc, argv); }
