#include "darn/cli.hpp"

int main(int argc, char** argv) { return darn::cli::run(argc, argv); }
