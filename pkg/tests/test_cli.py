import io
import re

import pytest

from fxir.cli import main


def run(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = main(list(argv), out=out, err=err)
    return code, out.getvalue(), err.getvalue()


def test_trace_demo_listing():
    code, out, _ = run("trace", "demo_fig1")
    assert code == 0
    listing = out.split("\n\n")[0].splitlines()
    pattern = re.compile(r"^\w+ = \w+ target=\w+ args=\(.*\)$")
    assert all(pattern.match(line) for line in listing)
    assert listing[0] == "x = placeholder target=x args=()"
    assert "graph demo_fig1 (x) {" in out


@pytest.mark.parametrize("cmd", ["trace", "run", "codegen", "dot", "shapes", "flops", "fuse",
                                 "quantize", "cse", "dce", "roundtrip"])
def test_every_command_is_deterministic(cmd):
    first = run(cmd, "convbn_net", "--seed", "2")
    second = run(cmd, "convbn_net", "--seed", "2")
    assert first[0] == 0
    assert first == second


def test_fuse_report():
    code, out, _ = run("fuse", "convbn_net", "--seed", "7")
    assert code == 0
    assert "rewrites: 2" in out
    diff = float(re.search(r"max-abs-diff: (\S+)", out).group(1))
    assert diff <= 1e-4


def test_quantize_report():
    code, out, _ = run("quantize", "autoenc", "--calib-batches", "4")
    assert code == 0
    assert float(re.search(r"sqnr-db: (\S+)", out).group(1)) >= 20
    assert re.search(r"^x min=\S+ max=\S+ n=4$", out, re.M)


def test_roundtrip():
    assert run("roundtrip", "convbn_net") == (0, "identical\n", "")


def test_pipeline_through_files(tmp_path):
    fused = tmp_path / "fused.fx"
    quantized = tmp_path / "q.fx"
    assert run("fuse", "convbn_net", "--seed", "3", "--out", str(fused))[0] == 0
    text = fused.read_text()
    assert text.startswith("# model: convbn_net\n# seed: 3\n# passes: fuse\n")
    assert run("quantize", str(fused), "--out", str(quantized))[0] == 0
    assert run("roundtrip", str(quantized))[1] == "identical\n"
    code, out, _ = run("run", str(quantized))
    assert code == 0 and out.startswith("output shape: [1,4,4,4]")
    # the file's graph is what runs: codegen echoes it back
    assert run("codegen", str(fused))[1] == text.split("# passes: fuse\n")[1]


def test_leaf_flag():
    _, out, _ = run("codegen", "gelu_sample", "--leaf", "act")
    assert "call_module act" in out


def test_input_shape_flag():
    code, out, _ = run("shapes", "mlp3", "--input-shape", "5,8")
    assert code == 0 and "output  [5,4]" in out


def test_dot_to_file(tmp_path):
    path = tmp_path / "g.dot"
    code, out, _ = run("dot", "mlp3", "--out", str(path))
    assert code == 0 and path.read_text().startswith("digraph")


def test_trace_error_exit_code():
    code, out, err = run("trace", "loop_shapes")
    assert code == 2 and out == ""
    assert "ControlFlowOnProxy" in err and "itr" in err


@pytest.mark.parametrize("body", [
    "graph g (x) {\n  y = call_function relu (%z)\n  return %y\n}\n",
    "# model: mlp3\ngraph g (x) {\n  y = call_function relu (%x\n  return %y\n}\n",
    "graph g (x) {\n  return %x\n}\n",
])
def test_parse_error_exit_code(tmp_path, body):
    path = tmp_path / "bad.fx"
    path.write_text(body)
    code, _, err = run("run", str(path))
    assert code == 3 and err


def test_missing_state_exit_code(tmp_path):
    path = tmp_path / "g.fx"
    path.write_text("# model: mlp3\ngraph g (x) {\n  y = call_module nope (%x)\n  return %y\n}\n")
    assert run("run", str(path))[0] == 3


@pytest.mark.parametrize("argv", [
    ["frob", "mlp3"], ["run", "no_such_model"], ["run"], ["run", "mlp3", "--seed", "x"],
    ["run", "mlp3", "--input-shape", "a,b"],
])
def test_usage_errors(argv):
    code, out, err = run(*argv)
    assert code == 1 and out == "" and err
