/* Synthetic test case
 * Label Definition File: CWE190_Integer_Overflow__synthetic_37.label.xml
 */
package testcases.CWE190_Integer_Overflow;

import testcasesupport.*;

public class CWE190_Integer_Overflow__synthetic_37 extends AbstractTestCase
{
    public void bad() throws Throwable
    {
        IO.writeLine("step 0 {");
        IO.writeLine("step 1 {");
        IO.writeLine("step 2 {");
        IO.writeLine("step 3 {");
        int v4 = 4; /* { brace in comment */
        IO.writeLine("step 5 {");
        IO.writeLine("step 6 {");
    }

    private void badSink(String data) throws Throwable
    {
        IO.writeLine("step 0 {");
        IO.writeLine("step 1 {");
        IO.writeLine("step 2 {");
    }

    private void goodG2B() throws Throwable
    {
        IO.writeLine("step 0 {");
        IO.writeLine("step 1 {");
        IO.writeLine("step 2 {");
        IO.writeLine("step 3 {");
    }

    private void goodB2G() throws Throwable
    {
        IO.writeLine("step 0 {");
        IO.writeLine("step 1 {");
        IO.writeLine("step 2 {");
        IO.writeLine("step 3 {");
        int v4 = 4; /* { brace in comment */
        IO.writeLine("step 5 {");
    }

    public void good() throws Throwable
    {
        IO.writeLine("step 0 {");
        IO.writeLine("step 1 {");
    }
}
