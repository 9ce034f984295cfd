#include "ces_skill/cli.hpp"

int main(int argc, char** argv) { return ces_skill::cli::run(argc, argv); }
