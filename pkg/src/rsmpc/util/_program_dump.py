"""util functions for dumping conic programs to text"""

from rsmpc.solvers.programs import ConicProgram


def program_to_text(program: ConicProgram) -> str:
    """Renders the objective and the constraint blocks of a program as text"""
    lines = [f"program {program.name}"]
    for key, var in program.variables.items():
        lines.append(f"variable {key} shape={var.shape}")
    for key, param in program.parameters.items():
        lines.append(f"parameter {key} shape={param.shape}")
    lines.append(f"minimize {program.objective_expression()}")
    for i, block in enumerate(program.blocks):
        name = block.name if block.name else f"block_{i}"
        lines.append(f"block {name} kind={block.kind} shape={block.expression.shape}")
        if block.kind == "second_order":
            lines.append(f"    ||{block.cone_vector}||_2 <= {block.expression}")
        elif block.kind == "psd":
            lines.append(f"    {block.expression} >= {block.epsilon} * I")
        elif block.kind == "equality":
            lines.append(f"    {block.expression} == 0")
        else:
            lines.append(f"    {block.expression} >= 0")
    return "\n".join(lines) + "\n"


def dump_program(program: ConicProgram, output_file: str) -> None:
    """Writes the text rendering of a program into output_file"""
    with open(output_file, "w", encoding="utf8") as out:
        print(program_to_text(program), file=out, end="")
