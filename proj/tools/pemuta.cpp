#include "pemuta/cli.hpp"

int main(int argc, char** argv) { return pemuta::cli::run(argc, argv); }
