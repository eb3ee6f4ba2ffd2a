#![allow(dead_code)]

use std::collections::BTreeSet;

use refbench_core::dataset::{BugCorpus, BugInstance, JavaSource, Label, SourceFile, SourceSet, Tool};

pub const PUSH_DOWN_A: &str = "public class A {\n  public int k() { return 10; }\n}\n";
pub const PUSH_DOWN_B_ORIG: &str =
    "public class B extends A {\n  public int k() { return 20; }\n  public int m() { return super.k(); }\n}\n";
pub const PUSH_DOWN_C_ORIG: &str = "public class C extends B {\n  public static void main(String[] args) {\n    C c = new C();\n    System.out.println(c.m());\n  }\n}\n";
pub const PUSH_DOWN_B_RES: &str = "public class B extends A {\n  public int k() { return 20; }\n}\n";
pub const PUSH_DOWN_C_RES: &str = "public class C extends B {\n  public int m() { return super.k(); }\n  public static void main(String[] args) {\n    C c = new C();\n    System.out.println(c.m());\n  }\n}\n";

pub const PUSH_DOWN_TEST: &str = "import static org.junit.Assert.assertEquals;\nimport org.junit.Test;\n\npublic class RefactoringBehaviorTest {\n  @Test\n  public void testMBehavior() {\n    assertEquals(10, new C().m());\n  }\n}\n";

pub const VACUOUS_TEST: &str = "import static org.junit.Assert.assertTrue;\nimport org.junit.Test;\n\npublic class VacuousTest {\n  @Test\n  public void alwaysPasses() {\n    assertTrue(new C() != null);\n  }\n}\n";

pub const EXTRACT_ORIG: &str = "class A {\n  public static void main(String[] a) { \n    new A().m(); \n  }\n  void m(){\n    Object[] x = {}; \n    boolean c = false;\n    if (c) \n      System.out.println(x[0]); \n    else \n      System.out.println(\"ok\");\n  }\n}\n";
pub const EXTRACT_RES: &str = "class A {\n  public static void main(String[] a) { \n    new A().m(); \n  }\n  void m(){\n    Object[] x = {}; \n    boolean c = false;\n    g(c, x[0]); \n  }\n  void g(boolean c, Object y){\n    if (c) \n      System.out.println(y); \n    else \n      System.out.println(\"ok\");\n  }\n}\n";
pub const EXTRACT_TEST: &str = "import org.junit.Test;\n\npublic class ExtractTest {\n  @Test\n  public void runsMain() {\n    A.main(new String[0]);\n  }\n}\n";

pub const INLINE_ORIG: &str =
    "public class A {\n  private void compIndex(boolean flag) {\n    Integer iii = flag ? 1 : 2;\n    iii.byteValue();\n  }\n}\n";
pub const INLINE_RES: &str =
    "public class A {\n  private void compIndex(boolean flag) {\n    (flag ? 1 : 2).byteValue();\n  }\n}\n";

pub fn set(files: &[(&str, &str)]) -> SourceSet {
    SourceSet::new(files.iter().map(|(p, c)| SourceFile { path: p.to_string(), content: c.to_string() }).collect())
        .unwrap()
}

pub fn push_down_original() -> SourceSet {
    set(&[("A.java", PUSH_DOWN_A), ("B.java", PUSH_DOWN_B_ORIG), ("C.java", PUSH_DOWN_C_ORIG)])
}

pub fn push_down_resulting() -> SourceSet {
    set(&[("A.java", PUSH_DOWN_A), ("B.java", PUSH_DOWN_B_RES), ("C.java", PUSH_DOWN_C_RES)])
}

pub fn java_test(class_name: &str, text: &str) -> JavaSource {
    JavaSource { class_name: class_name.into(), text: text.into() }
}

pub fn push_down_instance() -> BugInstance {
    BugInstance::new(
        "14",
        Tool::Eclipse,
        "Push Down Method",
        Label::Bc,
        push_down_original(),
        push_down_resulting(),
        Some(java_test("RefactoringBehaviorTest", PUSH_DOWN_TEST)),
    )
    .unwrap()
}

pub fn inline_instance() -> BugInstance {
    BugInstance::new(
        "104",
        Tool::NetBeans,
        "Inline Variable",
        Label::Ce,
        set(&[("A.java", INLINE_ORIG)]),
        set(&[("A.java", INLINE_RES)]),
        None,
    )
    .unwrap()
}

/// Twenty small programs covering the syntactic shapes the operators meet:
/// packages, imports, interfaces, enums, nested and anonymous classes,
/// lambdas, generics, braces inside strings and comments, and a file
/// without a trailing newline.
pub fn fixture_programs() -> Vec<(&'static str, SourceSet)> {
    vec![
        ("push_down", push_down_original()),
        ("extract", set(&[("A.java", EXTRACT_ORIG)])),
        ("inline", set(&[("A.java", INLINE_ORIG)])),
        (
            "iface",
            set(&[
                ("Shape.java", "public interface Shape {\n  double area();\n}\n"),
                (
                    "Square.java",
                    "public class Square implements Shape {\n  private final double s;\n  public Square(double s) { this.s = s; }\n  public double area() { return s * s; }\n}\n",
                ),
            ]),
        ),
        (
            "package",
            set(&[(
                "p/Counter.java",
                "package p;\n\nimport java.util.List;\n\npublic class Counter {\n  public int count(List<String> xs) {\n    return xs.size();\n  }\n}\n",
            )]),
        ),
        (
            "enum",
            set(&[(
                "Color.java",
                "public enum Color {\n  RED, GREEN;\n  public Color next() {\n    return this == RED ? GREEN : RED;\n  }\n}\n",
            )]),
        ),
        (
            "generic",
            set(&[(
                "Box.java",
                "public class Box<T extends Comparable<T>> {\n  private T v;\n  public Box(T v) { this.v = v; }\n  public boolean bigger(Box<T> o) { return v.compareTo(o.v) > 0; }\n}\n",
            )]),
        ),
        (
            "nested",
            set(&[(
                "Outer.java",
                "public class Outer {\n  static class Inner {\n    int x = 1;\n  }\n  int get() {\n    return new Inner().x;\n  }\n}\n",
            )]),
        ),
        (
            "abstract",
            set(&[(
                "Base.java",
                "public abstract class Base {\n  protected abstract int f();\n  public int twice() {\n    return 2 * f();\n  }\n}\n",
            )]),
        ),
        (
            "annotated",
            set(&[(
                "Ann.java",
                "public class Ann {\n  @Override\n  public String toString() {\n    return \"Ann\";\n  }\n  @Deprecated\n  void old() {}\n}\n",
            )]),
        ),
        ("no_newline", set(&[("N.java", "public class N {\n  int n() { return 3; }\n}")])),
        (
            "braces_in_strings",
            set(&[(
                "S.java",
                "public class S {\n  String open = \"{\";\n  char close = '}';\n  String both() {\n    return open + close + \"}{\";\n  }\n}\n",
            )]),
        ),
        (
            "braces_in_comments",
            set(&[(
                "K.java",
                "/* a { comment */\npublic class K {\n  // closing } in a line comment\n  int k() {\n    /* { */ return 1;\n  }\n}\n",
            )]),
        ),
        (
            "lambda",
            set(&[(
                "L.java",
                "import java.util.function.IntUnaryOperator;\n\npublic class L {\n  int apply(int x) {\n    IntUnaryOperator f = y -> { return y + 1; };\n    return f.applyAsInt(x);\n  }\n}\n",
            )]),
        ),
        (
            "anonymous",
            set(&[(
                "Anon.java",
                "public class Anon {\n  Runnable r() {\n    return new Runnable() {\n      public void run() {\n        System.out.println(\"run\");\n      }\n    };\n  }\n}\n",
            )]),
        ),
        (
            "two_types",
            set(&[(
                "Two.java",
                "public class Two {\n  int a() { return Helper.h(); }\n}\n\nclass Helper {\n  static int h() { return 7; }\n}\n",
            )]),
        ),
        ("marker_iface", set(&[("Marker.java", "public interface Marker {\n}\n")])),
        (
            "ctor",
            set(&[(
                "Point.java",
                "public class Point {\n  private int x;\n  private int y;\n  public Point(int x, int y) {\n    this.x = x;\n    this.y = y;\n  }\n  public int sum() { return x + y; }\n}\n",
            )]),
        ),
        (
            "switch",
            set(&[(
                "Sw.java",
                "public class Sw {\n  String name(int d) {\n    switch (d) {\n      case 0: { return \"zero\"; }\n      default: return \"many\";\n    }\n  }\n}\n",
            )]),
        ),
        (
            "static_init",
            set(&[(
                "Init.java",
                "import java.util.ArrayList;\nimport java.util.List;\n\npublic class Init {\n  static final List<Integer> XS = new ArrayList<>();\n  static {\n    XS.add(1);\n  }\n  int first() { return XS.get(0); }\n}\n",
            )]),
        ),
    ]
}

/// Every maximal run of Java identifier characters in `text`, including
/// those inside strings and comments.
pub fn words(text: &str) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    let mut cur = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() || ch == '_' || ch == '$' {
            cur.push(ch);
        } else if !cur.is_empty() {
            out.insert(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        out.insert(cur);
    }
    out
}

/// A ten-instance corpus mixing labels; BC entries reuse the figure test.
pub fn small_corpus(n: usize) -> BugCorpus {
    let programs = fixture_programs();
    let mut out = Vec::new();
    for i in 0..n {
        let inst = match i % 3 {
            0 => {
                let mut b = push_down_instance();
                b.id = format!("bc{i:02}");
                b
            }
            1 => {
                let mut c = inline_instance();
                c.id = format!("ce{i:02}");
                c
            }
            _ => {
                let p = programs[(i + 3) % programs.len()].1.clone();
                BugInstance::new(format!("pr{i:02}"), Tool::IntelliJ, "Rename Method", Label::Preserving, p.clone(), p, None)
                    .unwrap()
            }
        };
        out.push(inst);
    }
    BugCorpus::new(out).unwrap()
}

/// Canned response: BC with the figure test, CE, or YES, rotating by attempt.
pub fn canned_response(instance_id: &str, attempt: u32) -> String {
    let pick = (instance_id.bytes().map(u32::from).sum::<u32>() + attempt) % 3;
    match pick {
        0 => serde_json::json!({
            "verdict": "NO - BEHAVIOR CHANGE",
            "explanation": "super.k() resolves differently",
            "junit_test": PUSH_DOWN_TEST,
        })
        .to_string(),
        1 => r#"{"verdict": "NO - COMPILATION ERROR", "explanation": "int has no members", "junit_test": null}"#.into(),
        _ => r#"{"verdict": "YES", "explanation": "same behavior", "junit_test": null}"#.into(),
    }
}
