package testcases.CWE78_OS_Command_Injection;

public class CWE78_OS_Command_Injection__crlf_01 extends AbstractTestCase
{
    public void bad() throws Throwable
{
        Runtime.getRuntime().exec("ls " + data);
}

    public void good() throws Throwable
{
        goodB2G();
}

    private void goodB2G() throws Throwable
{
        Runtime.getRuntime().exec("ls");
}
}