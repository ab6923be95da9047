#include "moevd/run.hpp"

int main(int argc, char** argv) { return moevd::cli::main(argc, argv); }
