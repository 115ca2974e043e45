package testcases.CWE561_Dead_Code;

public class CWE561_Dead_Code__nobad_01 extends AbstractTestCase
{
    public void good() throws Throwable
{
        return;
}
}
