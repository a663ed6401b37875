"""Hand-built assembly snippets with expected mnemonic lists.

Each entry is (name, text, expected_mnemonics, expected_unparsed); the
expectations are written down by construction, next to the text, so the
parser is checked against the token rules rather than against itself.
"""

SNIPPETS = [
    ("empty", "", [], 0),
    ("whitespace_only", "   \n\t\n", [], 0),
    (
        "only_directives",
        ".version 8.0\n.target sm_80\n.address_size 64\n",
        [],
        0,
    ),
    ("guarded_branch", "@%p1 bra LBB0_2;\n", ["bra"], 0),
    ("negated_guard", "@!%p2 bra $L__BB0_4;\n", ["bra"], 0),
    (
        "two_statements_one_line",
        "ld.global.v4.b32 {%r1,%r2,%r3,%r4}, [%rd1]; add.s32 %r5, %r1, %r2;\n",
        ["ld.global.v4.b32", "add.s32"],
        0,
    ),
    ("label_then_instruction", "LBB0_2: mov.u32 %r1, 0;\n", ["mov.u32"], 0),
    ("label_alone_then_ret", "$L__BB0_8:\nret;\n", ["ret"], 0),
    (
        "line_comments",
        "// prologue\nadd.s32 %r1, %r2, %r3; // accumulate\n",
        ["add.s32"],
        0,
    ),
    (
        "inline_block_comment",
        "mul.lo.s32 /* widen */ %r4, %r5, %r6;\n",
        ["mul.lo.s32"],
        0,
    ),
    (
        "multiline_block_comment",
        "/* header\ncontinues over lines */\nsub.f32 %f1, %f2, %f3;\n",
        ["sub.f32"],
        0,
    ),
    ("braces_alone", "{\nmov.b32 %r1, %r2;\n}\n", ["mov.b32"], 0),
    (
        "entry_declaration",
        ".visible .entry kernel7(\n.param .u64 kernel7_param_0\n)\n{\nret;\n}\n",
        ["ret"],
        1,  # the lone ")" line
    ),
    ("fused_multiply_add", "fma.rn.f32 %f1, %f2, %f3, %f4;\n", ["fma.rn.f32"], 0),
    ("barrier", "bar.sync 0;\n", ["bar.sync"], 0),
    (
        "atomic",
        "atom.global.add.f32 %f1, [%rd1], %f2;\n",
        ["atom.global.add.f32"],
        0,
    ),
    (
        "vector_store_operand_braces",
        "st.global.v2.f64 [%rd3], {%fd1, %fd2};\n",
        ["st.global.v2.f64"],
        0,
    ),
    (
        "repeated_instruction",
        "add.s32 %r1, %r1, 1;\nadd.s32 %r2, %r2, 2;\nadd.s32 %r3, %r3, 3;\n",
        ["add.s32", "add.s32", "add.s32"],
        0,
    ),
    (
        "param_load_and_convert",
        "ld.param.u64 %rd1, [kernel_param_0];\ncvta.to.global.u64 %rd2, %rd1;\n",
        ["ld.param.u64", "cvta.to.global.u64"],
        0,
    ),
    (
        "warp_shuffle",
        "shfl.sync.bfly.b32 %r2, %r1, 16, 31, -1;\n",
        ["shfl.sync.bfly.b32"],
        0,
    ),
    (
        "tensor_core_mma",
        "mma.sync.aligned.m16n8k16.row.col.f32.f16.f16.f32 "
        "{%f0,%f1,%f2,%f3}, {%r0,%r1,%r2,%r3}, {%r4,%r5}, {%f0,%f1,%f2,%f3};\n",
        ["mma.sync.aligned.m16n8k16.row.col.f32.f16.f16.f32"],
        0,
    ),
    (
        "label_guard_comment_one_line",
        "LBB1_1: @%p0 bra LBB1_1; // loop back\n",
        ["bra"],
        0,
    ),
    ("crlf_line_endings", "mov.u32 %r1, 1;\r\nadd.s32 %r2, %r1, 1;\r\n", ["mov.u32", "add.s32"], 0),
    ("empty_statements", ";;;\n", [], 0),
    ("no_trailing_semicolon", "ret\n", ["ret"], 0),
    (
        "pragma_directive_with_string",
        '.pragma "nounroll";\n',
        [],
        0,
    ),
    (
        "amd_style_lines",
        "s_load_dwordx4 s[0:3], s[4:5], 0x0\nv_mov_b32 v1, 0\ns_waitcnt lgkmcnt(0)\n",
        ["s_load_dwordx4", "v_mov_b32", "s_waitcnt"],
        0,
    ),
    (
        # line-based splitting treats each line of a spread-out call as its
        # own statement; bare operand identifiers then read as mnemonics and
        # punctuated ones land in the unparsed tally
        "multiline_call_limitation",
        "call.uni (retval0),\nvprintf,\n(\nparam0,\nparam1\n);\n",
        ["call.uni", "param1"],
        4,  # "vprintf," "(" "param0," ")"
    ),
    (
        "setp_with_guard",
        "@%p3 setp.lt.s32 %p4, %r1, %r2;\n",
        ["setp.lt.s32"],
        0,
    ),
]

# a small realistic kernel body used by the metamorphic and injection tests
MINI_KERNEL = """\
//
// compiled variant for the diversity analysis tests
//
.version 8.2
.target sm_80
.address_size 64

.visible .entry reduce_kernel(
.param .u64 reduce_kernel_param_0,
.param .u32 reduce_kernel_param_1
)
{
.reg .pred %p<3>;
.reg .b32 %r<8>;
.reg .b64 %rd<5>;

ld.param.u64 %rd1, [reduce_kernel_param_0];
ld.param.u32 %r1, [reduce_kernel_param_1];
cvta.to.global.u64 %rd2, %rd1;
mov.u32 %r2, %ctaid.x;
mov.u32 %r3, %ntid.x;
mad.lo.s32 %r4, %r2, %r3, %r1;
setp.ge.s32 %p1, %r4, %r1;
@%p1 bra $L__BB0_2;

mul.wide.s32 %rd3, %r4, 4;
add.s64 %rd4, %rd2, %rd3;
ld.global.f32 %f1, [%rd4]; add.f32 %f2, %f1, 0f3F800000;
st.global.f32 [%rd4], %f2;

$L__BB0_2:
ret;

}
"""

MINI_KERNEL_MNEMONICS = [
    "ld.param.u64",
    "ld.param.u32",
    "cvta.to.global.u64",
    "mov.u32",
    "mov.u32",
    "mad.lo.s32",
    "setp.ge.s32",
    "bra",
    "mul.wide.s32",
    "add.s64",
    "ld.global.f32",
    "add.f32",
    "st.global.f32",
    "ret",
]
