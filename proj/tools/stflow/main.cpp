#include "stflow/commands.hpp"

int main(int argc, char** argv) { return stflow::cli::run(argc, argv); }
